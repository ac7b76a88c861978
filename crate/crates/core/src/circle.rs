//! Cross diffusion `dX = σY dW`, `dY = σX dW` and projections onto the unit
//! circle: exact solutions, closed-form angular coefficients and Monte Carlo
//! order-of-accuracy experiments.

use std::f64::consts::PI;

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geometry::Embedding;
use crate::projection::{project, ProjectionKind};
use crate::scalar::{lit, Scalar};
use crate::sde::{brownian_increments, euler_maruyama_with_increments, AmbientSde, NoiseSource};
use crate::stats::loglog_slope;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossDiffusionSpec<T: Scalar> {
    pub sigma: T,
    pub x0: T,
    pub y0: T,
}

impl<T: Scalar> CrossDiffusionSpec<T> {
    pub fn new(sigma: T, x0: T, y0: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(invalid("cross diffusion needs sigma > 0"));
        }
        Ok(Self { sigma, x0, y0 })
    }

    pub fn initial_state(&self) -> DVector<T> {
        DVector::from_vec(vec![self.x0, self.y0])
    }

    /// Initial angle; fails at the origin where the angle is undefined.
    pub fn initial_angle(&self) -> Result<T> {
        if self.x0 == T::zero() && self.y0 == T::zero() {
            return Err(invalid("the origin is a fixed point with no angle"));
        }
        Ok(self.y0.atan2(self.x0))
    }
}

/// The cross diffusion as an ambient SDE with its analytic diffusion Jacobian.
pub fn cross_diffusion_sde<T: Scalar>(sigma: T) -> AmbientSde<T> {
    AmbientSde::new(
        2,
        1,
        |_x: &DVector<T>, _t| DVector::zeros(2),
        move |x: &DVector<T>, _t| DMatrix::from_column_slice(2, 1, &[sigma * x[1], sigma * x[0]]),
    )
    .expect("valid dimensions")
    .with_diffusion_jacobian(move |_x: &DVector<T>, _t| {
        vec![DMatrix::from_row_slice(2, 2, &[T::zero(), sigma, sigma, T::zero()])]
    })
}

/// State at time `t` given the Brownian value `w = W_t`.
pub fn exact_solution<T: Scalar>(spec: &CrossDiffusionSpec<T>, w: T, t: T) -> (T, T) {
    let damp = (-spec.sigma * spec.sigma * t * lit::<T>(0.5)).exp();
    let (c, s) = ((spec.sigma * w).cosh(), (spec.sigma * w).sinh());
    (damp * (spec.x0 * c + spec.y0 * s), damp * (spec.y0 * c + spec.x0 * s))
}

/// Drift and diffusion of the exact angular SDE: `(−½σ² sin 4θ, σ cos 2θ)`.
pub fn exact_angular_coefficients<T: Scalar>(theta: T, sigma: T) -> (T, T) {
    (
        -lit::<T>(0.5) * sigma * sigma * (lit::<T>(4.0) * theta).sin(),
        sigma * (lit::<T>(2.0) * theta).cos(),
    )
}

/// Itô-jet projection onto the unit circle of a planar SDE with drift `(a1, a2)`
/// and a single diffusion column `(b1, b2)`, evaluated at angle `θ`.
pub fn bivariate_circle_closed_form<T: Scalar>(theta: T, a1: T, a2: T, b1: T, b2: T) -> (T, T) {
    let (s, c) = (theta.sin(), theta.cos());
    let two = lit::<T>(2.0);
    let drift = -a1 * s + a2 * c + lit::<T>(0.5) * (two * theta).sin() * (b1 * b1 - b2 * b2)
        - (two * theta).cos() * b1 * b2;
    (drift, -b1 * s + b2 * c)
}

/// Wrap an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Continuous angle of `(x, y)` nearest to `reference`.
pub fn unwrap_angle(reference: f64, x: f64, y: f64) -> f64 {
    let (s, c) = reference.sin_cos();
    reference + (c * y - s * x).atan2(c * x + s * y)
}

/// A fixed planar SDE with affine coefficients that does not fibre over the
/// circle projection:
/// `a(x, y) = (0.4 − 0.3y, 0.2 + 0.5x)`, `b(x, y) = (0.6 + 0.2y, 0.3 − 0.4x)`.
pub fn generic_bivariate_sde() -> AmbientSde<f64> {
    AmbientSde::new(
        2,
        1,
        |x: &DVector<f64>, _t| dvector![0.4 - 0.3 * x[1], 0.2 + 0.5 * x[0]],
        |x: &DVector<f64>, _t| dmatrix![0.6 + 0.2 * x[1]; 0.3 - 0.4 * x[0]],
    )
    .expect("valid dimensions")
    .with_diffusion_jacobian(|_x: &DVector<f64>, _t| vec![dmatrix![0.0, 0.2; -0.4, 0.0]])
}

/// Default starting angle for [`generic_bivariate_sde`] experiments.
pub const GENERIC_START_ANGLE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub t: f64,
    /// Mean of `|X_t − φ(Y_t)|²`.
    pub ambient_mse: f64,
    /// Mean of the squared chart distance between the nearest-point angle of `X_t` and `Y_t`.
    pub tracking_mse: f64,
    pub paths_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    pub kind: ProjectionKind,
    pub rows: Vec<MseRow>,
    pub ambient_slope: f64,
    pub tracking_slope: f64,
    /// Paths dropped because either integration blew up.
    pub blowups: usize,
}

/// Settings for [`mse_growth_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct MseExperiment {
    pub t_levels: Vec<f64>,
    pub n_paths: usize,
    /// Euler steps per horizon; `dt = t / steps_per_level`.
    pub steps_per_level: usize,
    pub seed: u64,
    pub theta0: f64,
}

/// Mean-square growth of the ambient and tracking errors of a circle projection.
///
/// Each path integrates the ambient SDE and the projected chart SDE with the
/// same Brownian increments, starting from `φ(θ₀)` and `θ₀`.
pub fn mse_growth_experiment(kind: ProjectionKind, sde: &AmbientSde<f64>, cfg: &MseExperiment) -> Result<MseTable> {
    if cfg.t_levels.len() < 4 {
        return Err(invalid("need at least four time levels"));
    }
    if cfg.t_levels.windows(2).any(|w| !(w[1] > w[0])) || !(cfg.t_levels[0] > 0.0) {
        return Err(invalid("time levels must be positive and increasing"));
    }
    if cfg.n_paths == 0 || cfg.steps_per_level == 0 {
        return Err(invalid("need at least one path and one step"));
    }
    let emb = Embedding::<f64>::unit_circle();
    let chart = project(kind, sde, &emb)?;
    let y0 = dvector![cfg.theta0];
    let x0 = emb.phi(&y0)?;
    let root = NoiseSource::new(cfg.seed, 0);

    let per_path: Vec<Option<Vec<(f64, f64)>>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path_noise = root.substream(p);
            let mut out = Vec::with_capacity(cfg.t_levels.len());
            for (li, &t) in cfg.t_levels.iter().enumerate() {
                let dt = t / cfg.steps_per_level as f64;
                let inc = brownian_increments::<f64>(path_noise.substream(li as u64), 1, cfg.steps_per_level, dt).ok()?;
                let x = euler_maruyama_with_increments(sde, &x0, 0.0, dt, &inc).ok()?;
                let y = chart.integrate_with_increments(&y0, 0.0, dt, &inc).ok()?;
                let xt = x.terminal();
                let yt = y.terminal()[0];
                let on_circle = emb.phi(&dvector![yt]).ok()?;
                let ambient = (xt - on_circle).norm_squared();
                let nearest = unwrap_angle(yt, xt[0], xt[1]);
                let tracking = (nearest - yt).powi(2);
                out.push((ambient, tracking));
            }
            Some(out)
        })
        .collect();

    let blowups = per_path.iter().filter(|p| p.is_none()).count();
    let good: Vec<&Vec<(f64, f64)>> = per_path.iter().flatten().collect();
    if good.is_empty() {
        return Err(invalid("every path blew up"));
    }
    if blowups > 0 {
        log::warn!("{blowups} of {} paths blew up and were excluded", cfg.n_paths);
    }
    let rows: Vec<MseRow> = cfg
        .t_levels
        .iter()
        .enumerate()
        .map(|(li, &t)| {
            let (sa, st) = good
                .iter()
                .fold((0.0, 0.0), |(sa, st), p| (sa + p[li].0, st + p[li].1));
            MseRow {
                t,
                ambient_mse: sa / good.len() as f64,
                tracking_mse: st / good.len() as f64,
                paths_used: good.len(),
            }
        })
        .collect();
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let amb: Vec<f64> = rows.iter().map(|r| r.ambient_mse).collect();
    let trk: Vec<f64> = rows.iter().map(|r| r.tracking_mse).collect();
    Ok(MseTable {
        kind,
        ambient_slope: loglog_slope(&ts, &amb)?,
        tracking_slope: loglog_slope(&ts, &trk)?,
        rows,
        blowups,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongOrderTable {
    pub dts: Vec<f64>,
    /// RMS terminal error of Euler–Maruyama against the exact solution.
    pub rms_state_error: Vec<f64>,
    /// RMS terminal error of Euler on the angular SDE against the exact angle.
    pub rms_angle_error: Vec<f64>,
    pub state_slope: f64,
    pub angle_slope: f64,
}

/// Strong convergence of Euler–Maruyama on the cross diffusion.
///
/// A fine Brownian path with `fine_steps` steps on `[0, horizon]` is shared
/// by all levels; level `k` uses `fine_steps / 2^k` steps, for `n_levels` levels.
pub fn em_strong_order_experiment(
    spec: &CrossDiffusionSpec<f64>,
    horizon: f64,
    fine_steps: usize,
    n_levels: usize,
    n_paths: usize,
    seed: u64,
) -> Result<StrongOrderTable> {
    if n_levels < 2 || fine_steps % (1 << (n_levels - 1)) != 0 {
        return Err(invalid("fine_steps must be divisible by 2^(n_levels - 1)"));
    }
    let theta0 = spec.initial_angle()?;
    let sde = cross_diffusion_sde(spec.sigma);
    let x0 = spec.initial_state();
    let fine_dt = horizon / fine_steps as f64;
    let root = NoiseSource::new(seed, 0);

    let per_path: Vec<Result<Vec<(f64, f64)>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let fine = brownian_increments::<f64>(root.substream(p), 1, fine_steps, fine_dt)?;
            let w: f64 = fine.iter().sum();
            let (xe, ye) = exact_solution(spec, w, horizon);
            let theta_exact = unwrap_angle(theta0, xe, ye);
            let mut errs = Vec::with_capacity(n_levels);
            for level in 0..n_levels {
                let block = 1 << level;
                let steps = fine_steps / block;
                let coarse = DMatrix::from_fn(steps, 1, |k, _| (0..block).map(|j| fine[(k * block + j, 0)]).sum());
                let dt = fine_dt * block as f64;
                let path = euler_maruyama_with_increments(&sde, &x0, 0.0, dt, &coarse)?;
                let xt = path.terminal();
                let state_err = (xt[0] - xe).powi(2) + (xt[1] - ye).powi(2);
                let mut th = theta0;
                for k in 0..steps {
                    let (a, b) = exact_angular_coefficients(th, spec.sigma);
                    th += a * dt + b * coarse[(k, 0)];
                }
                errs.push((state_err, (th - theta_exact).powi(2)));
            }
            Ok(errs)
        })
        .collect();
    let per_path: Vec<Vec<(f64, f64)>> = per_path.into_iter().collect::<Result<_>>()?;

    let dts: Vec<f64> = (0..n_levels).map(|l| fine_dt * (1 << l) as f64).collect();
    let n = per_path.len() as f64;
    let rms = |pick: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        (0..n_levels)
            .map(|l| (per_path.iter().map(|p| pick(&p[l])).sum::<f64>() / n).sqrt())
            .collect()
    };
    let rms_state_error = rms(|e| e.0);
    let rms_angle_error = rms(|e| e.1);
    Ok(StrongOrderTable {
        state_slope: loglog_slope(&dts, &rms_state_error)?,
        angle_slope: loglog_slope(&dts, &rms_angle_error)?,
        dts,
        rms_state_error,
        rms_angle_error,
    })
}

/// One sample of a cross-diffusion trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossDiffusionSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Continuous angle of `(x, y)`.
    pub theta: f64,
}

/// Exact cross-diffusion trajectory sampled every `dt` up to `horizon`.
pub fn cross_diffusion_path(
    spec: &CrossDiffusionSpec<f64>,
    horizon: f64,
    dt: f64,
    noise: NoiseSource,
) -> Result<Vec<CrossDiffusionSample>> {
    let theta0 = spec.initial_angle()?;
    let steps = (horizon / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - horizon).abs() > 1e-9 * horizon {
        return Err(invalid("dt must divide the horizon"));
    }
    let inc = brownian_increments::<f64>(noise, 1, steps, dt)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(CrossDiffusionSample {
        t: 0.0,
        x: spec.x0,
        y: spec.y0,
        theta: theta0,
    });
    let mut w = 0.0;
    let mut theta = theta0;
    for k in 0..steps {
        w += inc[(k, 0)];
        let t = (k + 1) as f64 * dt;
        let (x, y) = exact_solution(spec, w, t);
        theta = unwrap_angle(theta, x, y);
        out.push(CrossDiffusionSample { t, x, y, theta });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{ito_jet_at, project_at, stratonovich_at, StratonovichOptions};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_solution_examples() {
        let spec = CrossDiffusionSpec::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(exact_solution(&spec, 0.7, 0.0), (0.7f64.cosh(), 0.7f64.sinh()));
        let spec = CrossDiffusionSpec::new(0.8, 0.3, -1.2).unwrap();
        assert_eq!(exact_solution(&spec, 0.0, 0.0), (0.3, -1.2));
        let spec = CrossDiffusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let (x, y) = exact_solution(&spec, 0.42, 1.0);
        assert_relative_eq!((x + y) * (x - y), (-1f64).exp(), epsilon = 1e-14);
        assert!(CrossDiffusionSpec::new(0.0, 1.0, 0.0).is_err());
        assert!(CrossDiffusionSpec::new(1.0, 0.0, 0.0).unwrap().initial_angle().is_err());
    }

    #[test]
    fn product_invariant_along_exact_path() {
        let spec = CrossDiffusionSpec::new(1.3, 0.8, 0.5).unwrap();
        let k = spec.x0 * spec.x0 - spec.y0 * spec.y0;
        let path = cross_diffusion_path(&spec, 1.0, 1e-3, NoiseSource::new(5, 0)).unwrap();
        for s in &path {
            let inv = (s.x + s.y) * (s.x - s.y) * (spec.sigma * spec.sigma * s.t).exp();
            assert!((inv - k).abs() < 1e-12, "{inv} vs {k} at t = {}", s.t);
        }
    }

    #[test]
    fn angular_coefficient_examples() {
        assert_eq!(exact_angular_coefficients(0.0, 1.7), (0.0, 1.7));
        let (a, b) = exact_angular_coefficients(PI / 8.0, 1.0);
        assert_relative_eq!(a, -0.5, epsilon = 1e-15);
        assert_relative_eq!(b, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn bivariate_closed_form_examples() {
        assert_eq!(bivariate_circle_closed_form(0.0, 1.0, 2.0, 3.0, 4.0), (-10.0, 4.0));
        assert_eq!(bivariate_circle_closed_form(0.7, 0.0, 0.0, 0.0, 0.0), (0.0, 0.0));
        let sigma = 1.4;
        for &th in &[0.1f64, 0.9, -2.0] {
            let (a, b) = bivariate_circle_closed_form(th, 0.0, 0.0, sigma * th.sin(), sigma * th.cos());
            let (ea, eb) = exact_angular_coefficients(th, sigma);
            assert_relative_eq!(a, ea, epsilon = 1e-14);
            assert_relative_eq!(b, eb, epsilon = 1e-14);
        }
    }

    #[test]
    fn projections_of_cross_diffusion() {
        let emb = Embedding::<f64>::unit_circle();
        let sigma = 0.9;
        let sde = cross_diffusion_sde(sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let th = rng.random_range(-PI..PI);
            let y = dvector![th];
            let (ea, eb) = exact_angular_coefficients(th, sigma);
            for kind in ProjectionKind::ALL {
                let c = project_at(kind, &sde, &emb, &y, 0.0).unwrap();
                assert_relative_eq!(c.diffusion[(0, 0)], eb, epsilon = 1e-12);
                let expected = if kind == ProjectionKind::ItoVector { 0.0 } else { ea };
                assert!((c.drift[0] - expected).abs() < 1e-8, "{kind}");
            }
        }
    }

    #[test]
    fn jet_matches_bivariate_closed_form() {
        let emb = Embedding::<f64>::unit_circle();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let th = rng.random_range(-PI..PI);
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (a1, a2, b1, b2) = (c[0], c[1], c[2], c[3]);
            let sde = AmbientSde::new(
                2,
                1,
                move |_x: &DVector<f64>, _t| dvector![a1, a2],
                move |_x: &DVector<f64>, _t| dmatrix![b1; b2],
            )
            .unwrap();
            let got = ito_jet_at(&sde, &emb, &dvector![th], 0.0).unwrap();
            let (ea, eb) = bivariate_circle_closed_form(th, a1, a2, b1, b2);
            assert_relative_eq!(got.drift[0], ea, epsilon = 1e-12);
            assert_relative_eq!(got.diffusion[(0, 0)], eb, epsilon = 1e-12);
        }
    }

    #[test]
    fn generic_sde_is_not_fibred() {
        let emb = Embedding::<f64>::unit_circle();
        let sde = generic_bivariate_sde();
        let y = dvector![GENERIC_START_ANGLE];
        let s = stratonovich_at(&sde, &emb, &y, 0.0, StratonovichOptions::default()).unwrap();
        let v = project_at(ProjectionKind::ItoVector, &sde, &emb, &y, 0.0).unwrap();
        let j = project_at(ProjectionKind::ItoJet, &sde, &emb, &y, 0.0).unwrap();
        assert!((s.drift[0] - v.drift[0]).abs() > 1e-2);
        assert!((s.drift[0] - j.drift[0]).abs() > 1e-2);
        assert!(sde.fd_diffusion_jacobian(&dvector![0.2, 0.3], 0.0).unwrap()[0]
            .relative_eq(&sde.diffusion_jacobian(&dvector![0.2, 0.3], 0.0).unwrap()[0], 1e-8, 1e-8));
    }

    #[test]
    fn angle_helpers() {
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-0.5), -0.5);
        let th = unwrap_angle(3.1, (3.2f64).cos(), (3.2f64).sin());
        assert_relative_eq!(th, 3.2, epsilon = 1e-12);
        let th = unwrap_angle(-3.1, (-3.3f64).cos(), (-3.3f64).sin());
        assert_relative_eq!(th, -3.3, epsilon = 1e-12);
    }

    #[test]
    fn euler_converges_at_half_order() {
        let spec = CrossDiffusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let table = em_strong_order_experiment(&spec, 1.0, 256, 5, 1000, 3).unwrap();
        assert!((table.state_slope - 0.5).abs() <= 0.15, "{table:?}");
        assert!((table.angle_slope - 0.5).abs() <= 0.15, "{table:?}");
    }

    #[test]
    fn fibred_tracking_error_is_discretisation_only() {
        let sde = cross_diffusion_sde(1.0);
        let mut cfg = MseExperiment {
            t_levels: vec![0.0125, 0.025, 0.05, 0.1],
            n_paths: 2000,
            steps_per_level: 10,
            seed: 4,
            theta0: 0.2,
        };
        let coarse = mse_growth_experiment(ProjectionKind::ItoJet, &sde, &cfg).unwrap();
        cfg.steps_per_level = 40;
        let fine = mse_growth_experiment(ProjectionKind::ItoJet, &sde, &cfg).unwrap();
        // Quadrupling the steps cuts the mean-square tracking error about fourfold.
        let ratio = coarse.rows[2].tracking_mse / fine.rows[2].tracking_mse;
        assert!(ratio > 3.0 && ratio < 5.5, "ratio {ratio}");
        assert_eq!(coarse.blowups, 0);
    }

    #[test]
    fn experiment_rejects_bad_levels() {
        let sde = generic_bivariate_sde();
        let cfg = MseExperiment {
            t_levels: vec![0.1, 0.05, 0.2, 0.3],
            n_paths: 10,
            steps_per_level: 5,
            seed: 0,
            theta0: 0.0,
        };
        assert!(mse_growth_experiment(ProjectionKind::ItoJet, &sde, &cfg).is_err());
    }

    #[test]
    fn late_angles_cluster_near_diagonals() {
        let spec = CrossDiffusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let mut near = 0;
        for seed in 0..20 {
            let path = cross_diffusion_path(&spec, 5.0, 1e-2, NoiseSource::new(seed, 0)).unwrap();
            let th = path.last().unwrap().theta;
            if (th.abs() - PI / 4.0).abs() < 0.1 {
                near += 1;
            }
        }
        assert!(near >= 15, "{near}");
    }
}
