use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sdeproj::circle::{cross_diffusion_path, generic_bivariate_sde, mse_growth_experiment, CrossDiffusionSpec, MseExperiment};
use sdeproj::filter::{
    closed_form_coefficients, numeric_projection_coefficients, run_filter_comparison, FilterModel, GaussianParams,
};
use sdeproj::quadrature::GaussHermite;
use sdeproj::NoiseSource;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "SDEPROJ_OUT";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub rows: usize,
    /// Largest normwise relative error of a coefficient table.
    pub max_relative_error: Option<f64>,
}

/// `--out`, then the config's `output`, then the environment, then the working directory.
pub fn resolve_output_dir(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

type Row = Vec<String>;

fn write_csv(path: &Path, header: &[&str], rows: &[Row]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Run the configured experiment and write its CSV files.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seeds) = &opts.seeds {
        cfg.seeds = seeds.clone();
    }
    let diagnostics = cfg.validate();
    if !diagnostics.is_empty() {
        return Err(CliError::Invalid(diagnostics));
    }
    let out_dir = resolve_output_dir(opts.out_dir.as_deref(), &cfg);
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = opts.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let pool = pool.build().expect("thread pool");
    pool.install(|| match cfg.experiment {
        ExperimentKind::FilterComparison => filter_comparison(&cfg, &out_dir),
        ExperimentKind::OrderCheck => order_check(&cfg, &out_dir),
        ExperimentKind::CrossDiffusionPaths => cross_diffusion_paths(&cfg, &out_dir),
        ExperimentKind::CoefficientTable => coefficient_table(&cfg, &out_dir),
    })
}

/// Write the rows of every seed before the first failing one, then report the failure.
fn finish_per_seed(
    path: PathBuf,
    header: &[&str],
    per_seed: Vec<(u64, sdeproj::Result<Vec<Row>>)>,
) -> Result<RunSummary, CliError> {
    let mut rows = Vec::new();
    let mut failure = None;
    for (seed, result) in per_seed {
        match result {
            Ok(r) => rows.extend(r),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                failure = Some(e);
                break;
            }
        }
    }
    write_csv(&path, header, &rows)?;
    match failure {
        Some(e) => Err(CliError::from_library(e, rows.len())),
        None => Ok(RunSummary {
            files: vec![path],
            rows: rows.len(),
            max_relative_error: None,
        }),
    }
}

fn filter_comparison(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let fc = cfg.filter_comparison();
    let per_seed: Vec<(u64, sdeproj::Result<Vec<Row>>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let result = run_filter_comparison(&fc, seed).map(|c| {
                for (kind, run) in &c.runs {
                    if run.degenerate {
                        log::warn!("seed {seed}: {kind} floored on {} steps", run.floored_steps);
                    }
                }
                log::info!("seed {seed}: filter comparison done");
                c.rows
                    .iter()
                    .map(|r| {
                        vec![
                            cfg.experiment.to_string(),
                            r.seed.to_string(),
                            float(r.t),
                            r.kind.to_string(),
                            r.metric.to_string(),
                            float(r.residual),
                        ]
                    })
                    .collect()
            });
            (seed, result)
        })
        .collect();
    finish_per_seed(
        out.join("filter_comparison.csv"),
        &["experiment", "seed", "t", "kind", "metric", "residual"],
        per_seed,
    )
}

fn geometric_levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|k| lo * (step * k as f64).exp()).collect()
}

fn order_check(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let sde = generic_bivariate_sde();
    let levels = geometric_levels(cfg.t_min, cfg.t_max, cfg.n_levels);
    let mut slopes = Vec::new();
    let mut table = Vec::new();
    for &seed in &cfg.seeds {
        for &kind in &cfg.projections {
            let exp = MseExperiment {
                t_levels: levels.clone(),
                n_paths: cfg.n_paths,
                steps_per_level: cfg.steps_per_level,
                seed,
                theta0: cfg.theta0,
            };
            let t = mse_growth_experiment(kind, &sde, &exp).map_err(|e| CliError::from_library(e, slopes.len()))?;
            log::info!("seed {seed}: {kind} tracking slope {:.3}", t.tracking_slope);
            slopes.push(vec![
                cfg.experiment.to_string(),
                seed.to_string(),
                kind.to_string(),
                float(t.ambient_slope),
                float(t.tracking_slope),
                t.blowups.to_string(),
            ]);
            for r in &t.rows {
                table.push(vec![
                    cfg.experiment.to_string(),
                    seed.to_string(),
                    kind.to_string(),
                    float(r.t),
                    float(r.ambient_mse),
                    float(r.tracking_mse),
                    r.paths_used.to_string(),
                ]);
            }
        }
    }
    let slope_path = out.join("order_check.csv");
    let level_path = out.join("order_check_levels.csv");
    write_csv(
        &slope_path,
        &["experiment", "seed", "kind", "ambient_slope", "tracking_slope", "blowups"],
        &slopes,
    )?;
    write_csv(
        &level_path,
        &["experiment", "seed", "kind", "t", "ambient_mse", "tracking_mse", "paths_used"],
        &table,
    )?;
    Ok(RunSummary {
        files: vec![slope_path, level_path],
        rows: slopes.len() + table.len(),
        max_relative_error: None,
    })
}

fn cross_diffusion_paths(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let spec = CrossDiffusionSpec::new(cfg.sigma, cfg.x0, cfg.y0).map_err(|e| CliError::from_library(e, 0))?;
    let per_seed: Vec<(u64, sdeproj::Result<Vec<Row>>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let result = cross_diffusion_path(&spec, cfg.horizon, cfg.dt_path, NoiseSource::new(seed, 0)).map(|path| {
                path.iter()
                    .map(|s| {
                        vec![
                            cfg.experiment.to_string(),
                            seed.to_string(),
                            float(s.t),
                            float(s.x),
                            float(s.y),
                            float(s.theta),
                        ]
                    })
                    .collect()
            });
            (seed, result)
        })
        .collect();
    finish_per_seed(
        out.join("cross_diffusion_paths.csv"),
        &["experiment", "seed", "t", "x", "y", "theta"],
        per_seed,
    )
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn coefficient_table(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let model = FilterModel::cubic_sensor(cfg.epsilon);
    let rule = GaussHermite::new(cfg.quadrature_nodes).map_err(|e| CliError::from_library(e, 0))?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &kind in &cfg.kinds {
        let (metric, projection) = match (kind.metric(), kind.projection()) {
            (Some(m), Some(p)) => (m, p),
            _ => continue,
        };
        for &mean in &linspace(cfg.mean_min, cfg.mean_max, cfg.grid_points) {
            for &std_dev in &linspace(cfg.std_min, cfg.std_max, cfg.grid_points) {
                let theta = GaussianParams::new(mean, std_dev).map_err(|e| CliError::from_library(e, rows.len()))?;
                let num = numeric_projection_coefficients(metric, projection, &theta, &model, &rule, 0.0)
                    .map_err(|e| CliError::from_library(e, rows.len()))?;
                let cf = closed_form_coefficients(kind, &theta, cfg.epsilon);
                let scale = cf.drift.norm().max(cf.diffusion.norm());
                let pairs = [
                    ("drift_mean", num.drift[0], cf.drift[0]),
                    ("drift_std_dev", num.drift[1], cf.drift[1]),
                    ("gain_mean", num.diffusion[(0, 0)], cf.diffusion[(0, 0)]),
                    ("gain_std_dev", num.diffusion[(1, 0)], cf.diffusion[(1, 0)]),
                ];
                for (component, n, c) in pairs {
                    let rel = (n - c).abs() / scale;
                    worst = worst.max(rel);
                    rows.push(vec![
                        cfg.experiment.to_string(),
                        kind.to_string(),
                        float(mean),
                        float(std_dev),
                        component.to_string(),
                        float(n),
                        float(c),
                        float(rel),
                    ]);
                }
            }
        }
    }
    let path = out.join("coefficient_table.csv");
    write_csv(
        &path,
        &["experiment", "kind", "mean", "std_dev", "component", "numeric", "closed_form", "rel_error"],
        &rows,
    )?;
    Ok(RunSummary {
        files: vec![path],
        rows: rows.len(),
        max_relative_error: Some(worst),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_spacing() {
        let l = geometric_levels(1e-3, 1e-1, 5);
        assert!((l[2] - 1e-2).abs() < 1e-15);
        assert!((l[4] - 1e-1).abs() < 1e-15);
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(float(0.1), "1.0000000000000001e-1");
        assert_eq!(float(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
