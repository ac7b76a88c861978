use crate::error::{invalid, Result};
use crate::scalar::{from_usize, lit, Scalar};
use crate::sde::NoiseSource;

use super::closed_form::FilterKind;
use super::fd::{check_fd_stability, run_reference, FdScheme};
use super::gaussian::Metric;
use super::grid::{hellinger_residual, l2_residual, DensityGrid, GridSpec};
use super::model::{simulate_signal_observation, FilterModel, GaussianParams};
use super::run::{run_filter, ClosedForm, FilterRun, DEFAULT_THETA_MIN};

/// Cubic-sensor benchmark of Gaussian filters against the finite-difference reference.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterComparisonConfig<T: Scalar> {
    pub eps: T,
    pub horizon: T,
    pub dt_filter: T,
    pub dt_fd: T,
    pub grid: GridSpec<T>,
    /// Initial law of the signal and initial filter state.
    pub prior: GaussianParams<T>,
    pub kinds: Vec<FilterKind>,
    /// Residuals are reported every this many filter steps.
    pub report_every: usize,
    pub theta_min: T,
    pub scheme: FdScheme,
}

impl<T: Scalar> Default for FilterComparisonConfig<T> {
    fn default() -> Self {
        Self {
            eps: lit(0.05),
            horizon: T::one(),
            dt_filter: lit(2e-4),
            dt_fd: lit(2e-4),
            grid: GridSpec {
                x_min: lit(-10.0),
                x_max: lit(10.0),
                n_cells: 1000,
            },
            prior: GaussianParams {
                mean: T::zero(),
                std_dev: T::one(),
            },
            kinds: FilterKind::ALL.to_vec(),
            report_every: 50,
            theta_min: lit(DEFAULT_THETA_MIN),
            scheme: FdScheme::default(),
        }
    }
}

impl<T: Scalar> FilterComparisonConfig<T> {
    /// Every problem that would stop a run, as readable messages.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eps.is_finite()) {
            out.push("epsilon must be finite".to_string());
        }
        if !(self.horizon > T::zero()) {
            out.push("horizon must be positive".to_string());
        }
        if !(self.dt_fd > T::zero()) || !(self.dt_filter > T::zero()) {
            out.push("time steps must be positive".to_string());
        } else {
            match self.coarsening() {
                Ok(_) => {}
                Err(e) => out.push(e.to_string()),
            }
            if self.horizon > T::zero() && self.steps(self.dt_filter).is_err() {
                out.push("dt_filter must divide the horizon".to_string());
            }
        }
        if let Err(e) = GridSpec::new(self.grid.x_min, self.grid.x_max, self.grid.n_cells) {
            out.push(e.to_string());
        } else if self.dt_fd > T::zero() {
            let model = FilterModel::cubic_sensor(self.eps);
            if let Err(e) = check_fd_stability(&model, &self.grid, self.dt_fd, T::zero()) {
                out.push(e.to_string());
            }
        }
        if !(self.prior.std_dev > T::zero()) {
            out.push("prior standard deviation must be positive".to_string());
        }
        if self.kinds.is_empty() {
            out.push("at least one filter kind is required".to_string());
        }
        if self.report_every == 0 {
            out.push("report_every must be positive".to_string());
        }
        if !(self.theta_min > T::zero()) {
            out.push("theta_min must be positive".to_string());
        }
        out
    }

    fn validate(&self) -> Result<()> {
        match self.diagnostics().first() {
            Some(msg) => Err(invalid(msg.clone())),
            None => Ok(()),
        }
    }

    /// Number of reference steps per filter step.
    fn coarsening(&self) -> Result<usize> {
        let ratio = (self.dt_filter / self.dt_fd).to_f64_lossy();
        let factor = ratio.round();
        if factor < 1.0 || (ratio - factor).abs() > 1e-6 {
            return Err(invalid("dt_filter must be a positive integer multiple of dt_fd"));
        }
        Ok(factor as usize)
    }

    fn steps(&self, dt: T) -> Result<usize> {
        let ratio = (self.horizon / dt).to_f64_lossy();
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 {
            return Err(invalid("step does not divide the horizon"));
        }
        Ok(n as usize)
    }

    /// Filter step indices at which residuals are reported.
    pub fn report_steps(&self) -> Result<Vec<usize>> {
        let n = self.steps(self.dt_filter)?;
        Ok((0..=n).step_by(self.report_every.max(1)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow<T: Scalar> {
    pub seed: u64,
    pub t: T,
    pub kind: FilterKind,
    pub metric: Metric,
    pub residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterComparison<T: Scalar> {
    pub seed: u64,
    pub x0: T,
    pub times: Vec<T>,
    /// Ordered by time, then kind in configuration order, then metric.
    pub rows: Vec<ResidualRow<T>>,
    pub runs: Vec<(FilterKind, FilterRun<T>)>,
}

impl<T: Scalar> FilterComparison<T> {
    /// Residual curve of one filter in one metric over the reported times.
    pub fn curve(&self, kind: FilterKind, metric: Metric) -> Vec<T> {
        self.rows
            .iter()
            .filter(|r| r.kind == kind && r.metric == metric)
            .map(|r| r.residual)
            .collect()
    }
}

/// Simulate one signal/observation pair and compare every configured filter
/// with the finite-difference reference on the same record.
///
/// The initial signal value is drawn from the prior using `substream(2)` of the
/// seed's noise; the signal and observation use substreams 0 and 1.
pub fn run_filter_comparison<T: Scalar>(cfg: &FilterComparisonConfig<T>, seed: u64) -> Result<FilterComparison<T>> {
    cfg.validate()?;
    let model = FilterModel::cubic_sensor(cfg.eps);
    let noise = NoiseSource::new(seed, 0);
    let z: T = noise.substream(2).standard_normals(1)[0];
    let x0 = cfg.prior.mean + cfg.prior.std_dev * z;
    let record = simulate_signal_observation(&model, x0, cfg.horizon, cfg.dt_fd, noise)?;
    let factor = cfg.coarsening()?;
    let filter_record = record.coarsen(factor)?;
    let report = cfg.report_steps()?;
    let fd_steps: Vec<usize> = report.iter().map(|k| k * factor).collect();
    let p0 = DensityGrid::from_gaussian(cfg.grid, &cfg.prior)?;
    let reference = run_reference(&p0, &model, &record, cfg.scheme, &fd_steps)?;

    let mut runs = Vec::with_capacity(cfg.kinds.len());
    for &kind in &cfg.kinds {
        let source = ClosedForm { kind, eps: cfg.eps };
        runs.push((kind, run_filter(&source, &filter_record, cfg.prior, cfg.theta_min)?));
    }

    let times: Vec<T> = report.iter().map(|&k| cfg.dt_filter * from_usize::<T>(k)).collect();
    let mut rows = Vec::with_capacity(times.len() * runs.len() * 2);
    for (i, (&k, p)) in report.iter().zip(&reference).enumerate() {
        for (kind, run) in &runs {
            let theta = &run.thetas[k];
            for metric in Metric::ALL {
                let residual = match metric {
                    Metric::L2 => l2_residual(p, theta),
                    Metric::Hellinger => hellinger_residual(p, theta),
                };
                rows.push(ResidualRow {
                    seed,
                    t: times[i],
                    kind: *kind,
                    metric,
                    residual,
                });
            }
        }
    }
    log::info!("seed {seed}: {} residual rows", rows.len());
    Ok(FilterComparison {
        seed,
        x0,
        times,
        rows,
        runs,
    })
}

/// Agreement between the reference solver at the configured resolution and
/// at half the grid spacing with a quarter of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfConvergence<T: Scalar> {
    pub times: Vec<T>,
    /// `L²` distance between the two solutions at each reported time.
    pub l2_differences: Vec<T>,
    pub max_difference: T,
}

pub fn fd_self_convergence<T: Scalar>(cfg: &FilterComparisonConfig<T>, seed: u64) -> Result<SelfConvergence<T>> {
    cfg.validate()?;
    let model = FilterModel::cubic_sensor(cfg.eps);
    let noise = NoiseSource::new(seed, 0);
    let z: T = noise.substream(2).standard_normals(1)[0];
    let x0 = cfg.prior.mean + cfg.prior.std_dev * z;
    let fine_dt = cfg.dt_fd / lit::<T>(4.0);
    let fine_record = simulate_signal_observation(&model, x0, cfg.horizon, fine_dt, noise)?;
    let coarse_record = fine_record.coarsen(4)?;
    let factor = cfg.coarsening()?;
    let report = cfg.report_steps()?;
    let coarse_steps: Vec<usize> = report.iter().map(|k| k * factor).collect();
    let fine_steps: Vec<usize> = coarse_steps.iter().map(|k| 4 * k).collect();
    let fine_grid = GridSpec::new(cfg.grid.x_min, cfg.grid.x_max, 2 * cfg.grid.n_cells)?;

    let coarse = run_reference(&DensityGrid::from_gaussian(cfg.grid, &cfg.prior)?, &model, &coarse_record, cfg.scheme, &coarse_steps)?;
    let fine = run_reference(&DensityGrid::from_gaussian(fine_grid, &cfg.prior)?, &model, &fine_record, cfg.scheme, &fine_steps)?;

    let l2_differences: Vec<T> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| {
            c.trapezoid(|i, _| {
                let d = c.values()[i] - f.values()[2 * i];
                d * d
            })
            .sqrt()
        })
        .collect();
    let max_difference = l2_differences.iter().fold(T::zero(), |a, b| a.max(*b));
    Ok(SelfConvergence {
        times: report.iter().map(|&k| cfg.dt_filter * from_usize::<T>(k)).collect(),
        l2_differences,
        max_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> FilterComparisonConfig<f64> {
        FilterComparisonConfig {
            horizon: 0.1,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_is_clean() {
        assert!(FilterComparisonConfig::<f64>::default().diagnostics().is_empty());
    }

    #[test]
    fn diagnostics_flag_each_problem() {
        let unstable = FilterComparisonConfig::<f64> {
            dt_fd: 1e-3,
            dt_filter: 1e-3,
            ..Default::default()
        };
        assert!(unstable.diagnostics().iter().any(|d| d.contains("unstable")));
        let empty = FilterComparisonConfig::<f64> {
            kinds: vec![],
            ..Default::default()
        };
        assert_eq!(empty.diagnostics().len(), 1);
        let floor = FilterComparisonConfig::<f64> {
            theta_min: 0.0,
            ..Default::default()
        };
        assert!(floor.diagnostics().iter().any(|d| d.contains("theta_min")));
        let ratio = FilterComparisonConfig::<f64> {
            dt_filter: 3e-4,
            ..Default::default()
        };
        assert!(!ratio.diagnostics().is_empty());
        assert!(run_filter_comparison(&empty, 1).is_err());
    }

    #[test]
    fn rows_cover_every_time_kind_and_metric() {
        let cfg = short();
        let out = run_filter_comparison(&cfg, 3).unwrap();
        assert_eq!(out.times.len(), 11);
        assert_eq!(out.rows.len(), 11 * 8 * 2);
        assert_eq!(out.rows[0].t, 0.0);
        // All filters start at the prior, which is also the reference at t = 0.
        assert!(out.rows[..16].iter().all(|r| r.residual < 1e-8));
        assert_eq!(out.curve(FilterKind::Ekf, Metric::L2).len(), 11);
        assert_eq!(out, run_filter_comparison(&cfg, 3).unwrap());
    }

    #[test]
    fn coarser_filter_step_uses_same_record() {
        let cfg = FilterComparisonConfig {
            dt_filter: 4e-4,
            report_every: 25,
            ..short()
        };
        let out = run_filter_comparison(&cfg, 3).unwrap();
        assert_eq!(out.times.len(), 11);
        assert!((out.times[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn reference_is_resolved() {
        let sc = fd_self_convergence(&short(), 4).unwrap();
        assert_eq!(sc.l2_differences.len(), 11);
        assert!(sc.max_difference < 1e-3, "{}", sc.max_difference);
    }
}
