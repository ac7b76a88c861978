use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::scalar::{from_usize, lit, Scalar};

use super::grid::{trapezoid, DensityGrid, GridSpec};
use super::model::{FilterModel, ObservationRecord};

/// Time stepping of the Kushner–Stratonovich equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FdScheme {
    /// `p + L*p dt + p (b − E_p b)(dY − E_p b dt)`.
    ExplicitEuler,
    /// `(p + L*p dt) · exp((b − E_p b)(dY − E_p b dt) − ½ (b − E_p b)² dt)`,
    /// which keeps the observation update positive and removes the `O(dt)`
    /// spurious variance injection of the explicit update.
    #[default]
    Exponential,
}

impl fmt::Display for FdScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ExplicitEuler => "explicit_euler",
            Self::Exponential => "exponential",
        })
    }
}

impl FromStr for FdScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "explicit_euler" | "euler" => Ok(Self::ExplicitEuler),
            "exponential" | "exp" => Ok(Self::Exponential),
            other => Err(invalid(format!("unknown finite-difference scheme '{other}'"))),
        }
    }
}

/// Explicit stability condition `dt ≤ Δx² / max σ²` at time `t`.
pub fn check_fd_stability<T: Scalar>(model: &FilterModel<T>, spec: &GridSpec<T>, dt: T, t: T) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let max_sq = spec
        .nodes()
        .into_iter()
        .map(|x| model.diffusion_sq(x, t))
        .fold(T::zero(), |a, b| a.max(b));
    let dx = spec.dx();
    if dt * max_sq > dx * dx {
        return Err(invalid(format!(
            "unstable finite-difference step: dt = {} exceeds dx²/max σ² = {}",
            dt.to_f64_lossy(),
            (dx * dx / max_sq).to_f64_lossy()
        )));
    }
    Ok(())
}

/// One step of the Kushner–Stratonovich equation on the grid of `p`.
///
/// Central differences for `L*p = ½ (σ² p)'' − (f p)'`, zero boundary values,
/// negative values clamped and the result renormalised.
pub fn ks_fd_step<T: Scalar>(
    p: &DensityGrid<T>,
    model: &FilterModel<T>,
    t: T,
    dt: T,
    dy: T,
    scheme: FdScheme,
) -> Result<DensityGrid<T>> {
    let spec = *p.spec();
    check_fd_stability(model, &spec, dt, t)?;
    let n = spec.n_cells;
    let dx = spec.dx();
    let vals = p.values();
    let nodes = spec.nodes();
    let u: Vec<T> = nodes.iter().zip(vals).map(|(&x, &v)| model.diffusion_sq(x, t) * v).collect();
    let w: Vec<T> = nodes.iter().zip(vals).map(|(&x, &v)| model.drift(x, t) * v).collect();
    let b: Vec<T> = nodes.iter().map(|&x| model.observation(x, t)).collect();
    let eb = trapezoid(&spec, |i, _| vals[i] * b[i]);
    let innovation = dy - eb * dt;
    let half = lit::<T>(0.5);
    let inv_dx2 = T::one() / (dx * dx);
    let inv_2dx = T::one() / (dx + dx);

    let mut out = vec![T::zero(); n + 1];
    for i in 1..n {
        let lp = half * (u[i + 1] - u[i] - u[i] + u[i - 1]) * inv_dx2 - (w[i + 1] - w[i - 1]) * inv_2dx;
        let centred = b[i] - eb;
        let v = match scheme {
            FdScheme::ExplicitEuler => vals[i] + lp * dt + vals[i] * centred * innovation,
            FdScheme::Exponential => (vals[i] + lp * dt) * (centred * innovation - half * centred * centred * dt).exp(),
        };
        out[i] = v.max(T::zero());
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup {
            step: 0,
            time: t.to_f64_lossy(),
        });
    }
    let mut next = DensityGrid::from_raw(spec, out);
    let mass = next.normalize()?;
    log::trace!("ks step at t = {}: mass before normalisation {}", t.to_f64_lossy(), mass.to_f64_lossy());
    Ok(next)
}

/// Run the finite-difference reference along `record`, returning the density
/// after each step index in `sample_steps` (0 is the initial density).
pub fn run_reference<T: Scalar>(
    p0: &DensityGrid<T>,
    model: &FilterModel<T>,
    record: &ObservationRecord<T>,
    scheme: FdScheme,
    sample_steps: &[usize],
) -> Result<Vec<DensityGrid<T>>> {
    if sample_steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("sample steps must be nondecreasing"));
    }
    if let Some(&last) = sample_steps.last() {
        if last > record.len() {
            return Err(invalid(format!("sample step {last} beyond record length {}", record.len())));
        }
    }
    check_fd_stability(model, p0.spec(), record.dt, T::zero())?;
    let mut out = Vec::with_capacity(sample_steps.len());
    let mut next_sample = 0;
    let mut p = p0.clone();
    for k in 0..=record.len() {
        while next_sample < sample_steps.len() && sample_steps[next_sample] == k {
            out.push(p.clone());
            next_sample += 1;
        }
        if k == record.len() || next_sample == sample_steps.len() {
            break;
        }
        let t = record.dt * from_usize::<T>(k);
        p = ks_fd_step(&p, model, t, record.dt, record.increments[k], scheme).map_err(|e| match e {
            Error::NumericalBlowup { time, .. } => Error::NumericalBlowup { step: k, time },
            other => other,
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::model::{simulate_signal_observation, GaussianParams, ScalarField};
    use crate::sde::NoiseSource;
    use std::sync::Arc;

    fn paper_grid() -> GridSpec<f64> {
        GridSpec::new(-10.0, 10.0, 1000).unwrap()
    }

    #[test]
    fn stationary_input_is_unchanged() {
        let zero: ScalarField<f64> = Arc::new(|_x, _t| 0.0);
        let obs: ScalarField<f64> = Arc::new(|x, _t| x + 0.1 * x * x * x);
        let model = FilterModel::new([zero.clone(), zero.clone(), zero.clone(), zero.clone(), zero, obs]);
        let p = DensityGrid::from_gaussian(paper_grid(), &GaussianParams::new(0.3, 1.2).unwrap()).unwrap();
        let eb = p.expectation(|x| x + 0.1 * x * x * x);
        let dt = 2e-4;
        let q = ks_fd_step(&p, &model, 0.0, dt, eb * dt, FdScheme::ExplicitEuler).unwrap();
        let diff = p.values().iter().zip(q.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn stability_precondition() {
        let model = FilterModel::cubic_sensor(0.05);
        assert!(check_fd_stability(&model, &paper_grid(), 2e-4, 0.0).is_ok());
        assert!(check_fd_stability(&model, &paper_grid(), 1e-3, 0.0).is_err());
        let p = DensityGrid::from_gaussian(paper_grid(), &GaussianParams::new(0.0, 1.0).unwrap()).unwrap();
        assert!(ks_fd_step(&p, &model, 0.0, 1e-3, 0.0, FdScheme::Exponential).is_err());
    }

    #[test]
    fn mass_is_conserved_after_each_step() {
        let model = FilterModel::cubic_sensor(0.05);
        let mut p = DensityGrid::from_gaussian(paper_grid(), &GaussianParams::new(0.0, 1.0).unwrap()).unwrap();
        for (k, dy) in [0.01, -0.02, 0.005, 0.0].iter().enumerate() {
            for scheme in [FdScheme::ExplicitEuler, FdScheme::Exponential] {
                p = ks_fd_step(&p, &model, k as f64 * 2e-4, 2e-4, *dy, scheme).unwrap();
                assert!((p.mass() - 1.0).abs() < 1e-12);
                assert!(p.values().iter().all(|v| *v >= 0.0));
                assert_eq!(p.values()[0], 0.0);
                assert_eq!(*p.values().last().unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn linear_problem_tracks_kalman_bucy() {
        let model = FilterModel::cubic_sensor(0.0);
        let dt = 2e-4;
        let rec = simulate_signal_observation(&model, 0.7, 0.5, dt, NoiseSource::new(12, 0)).unwrap();
        let p0 = DensityGrid::from_gaussian(paper_grid(), &GaussianParams::new(0.0, 1.0).unwrap()).unwrap();
        let steps: Vec<usize> = (0..=rec.len()).step_by(50).collect();
        let grids = run_reference(&p0, &model, &rec, FdScheme::Exponential, &steps).unwrap();
        let (mut m, mut var) = (0.0, 1.0);
        let mut max_err: f64 = 0.0;
        let mut s = 0;
        for k in 0..=rec.len() {
            if s < steps.len() && steps[s] == k {
                max_err = max_err.max((grids[s].mean() - m).abs()).max((grids[s].variance() - var).abs());
                s += 1;
            }
            if k < rec.len() {
                let dy = rec.increments[k];
                m += var * (dy - m * dt);
                var += (1.0 - var * var) * dt;
            }
        }
        assert!(max_err < 5e-3, "{max_err}");
    }

    #[test]
    fn reference_sampling_validation() {
        let model = FilterModel::cubic_sensor(0.0);
        let rec = simulate_signal_observation(&model, 0.0, 0.01, 2e-4, NoiseSource::new(1, 0)).unwrap();
        let p0 = DensityGrid::from_gaussian(paper_grid(), &GaussianParams::new(0.0, 1.0).unwrap()).unwrap();
        assert!(run_reference(&p0, &model, &rec, FdScheme::Exponential, &[5, 2]).is_err());
        assert!(run_reference(&p0, &model, &rec, FdScheme::Exponential, &[51]).is_err());
        let g = run_reference(&p0, &model, &rec, FdScheme::Exponential, &[0, 0, 50]).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], p0);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("exponential".parse::<FdScheme>().unwrap(), FdScheme::Exponential);
        assert_eq!("explicit-euler".parse::<FdScheme>().unwrap(), FdScheme::ExplicitEuler);
        assert!("crank".parse::<FdScheme>().is_err());
        assert_eq!(FdScheme::default().to_string(), "exponential");
    }
}
