use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::projection::{ChartCoefficients, ProjectionKind};
use crate::scalar::{lit, Scalar};

use super::gaussian::Metric;
use super::model::GaussianParams;

/// The Gaussian filters with closed-form coefficients for the cubic sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    VecL2,
    VecHellinger,
    JetL2,
    JetHellinger,
    StratL2,
    /// Also the Stratonovich assumed density filter.
    StratHellinger,
    Ekf,
    ItoAdf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 8] = [
        Self::VecL2,
        Self::VecHellinger,
        Self::JetL2,
        Self::JetHellinger,
        Self::StratL2,
        Self::StratHellinger,
        Self::Ekf,
        Self::ItoAdf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::VecL2 => "vec_l2",
            Self::VecHellinger => "vec_hellinger",
            Self::JetL2 => "jet_l2",
            Self::JetHellinger => "jet_hellinger",
            Self::StratL2 => "strat_l2",
            Self::StratHellinger => "strat_hellinger",
            Self::Ekf => "ekf",
            Self::ItoAdf => "ito_adf",
        }
    }

    /// Geometry of the projection behind this filter, if it is a projection filter.
    pub fn metric(self) -> Option<Metric> {
        match self {
            Self::VecL2 | Self::JetL2 | Self::StratL2 => Some(Metric::L2),
            Self::VecHellinger | Self::JetHellinger | Self::StratHellinger => Some(Metric::Hellinger),
            Self::Ekf | Self::ItoAdf => None,
        }
    }

    pub fn projection(self) -> Option<ProjectionKind> {
        match self {
            Self::VecL2 | Self::VecHellinger => Some(ProjectionKind::ItoVector),
            Self::JetL2 | Self::JetHellinger => Some(ProjectionKind::ItoJet),
            Self::StratL2 | Self::StratHellinger => Some(ProjectionKind::Stratonovich),
            Self::Ekf | Self::ItoAdf => None,
        }
    }

    /// The projection filter with the given geometry and projection.
    pub fn from_parts(metric: Metric, projection: ProjectionKind) -> Self {
        match (metric, projection) {
            (Metric::L2, ProjectionKind::ItoVector) => Self::VecL2,
            (Metric::L2, ProjectionKind::ItoJet) => Self::JetL2,
            (Metric::L2, ProjectionKind::Stratonovich) => Self::StratL2,
            (Metric::Hellinger, ProjectionKind::ItoVector) => Self::VecHellinger,
            (Metric::Hellinger, ProjectionKind::ItoJet) => Self::JetHellinger,
            (Metric::Hellinger, ProjectionKind::Stratonovich) => Self::StratHellinger,
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let kind = match key.as_str() {
            "vec_l2" => Self::VecL2,
            "vec_hellinger" | "vec_h" => Self::VecHellinger,
            "jet_l2" => Self::JetL2,
            "jet_hellinger" | "jet_h" => Self::JetHellinger,
            "strat_l2" => Self::StratL2,
            "strat_hellinger" | "strat_h" | "strat_adf" => Self::StratHellinger,
            "ekf" => Self::Ekf,
            "ito_adf" | "adf" => Self::ItoAdf,
            _ => return Err(invalid(format!("unknown filter kind '{}'", s.trim()))),
        };
        Ok(kind)
    }
}

/// `E_θ[x + εx³] = θ¹ + ε((θ¹)³ + 3θ¹(θ²)²)`.
pub fn gaussian_moment_b<T: Scalar>(theta: &GaussianParams<T>, eps: T) -> T {
    let (m, s) = (theta.mean, theta.std_dev);
    m + eps * (m * m * m + lit::<T>(3.0) * m * s * s)
}

/// Drift `A` and `dY`-gain `B` of the chosen filter for the cubic sensor
/// `b(x) = x + εx³` with `f = 0`, `σ = 1`.
pub fn closed_form_coefficients<T: Scalar>(kind: FilterKind, theta: &GaussianParams<T>, eps: T) -> ChartCoefficients<T> {
    let c = |x: f64| lit::<T>(x);
    let (t1, t2, e) = (theta.mean, theta.std_dev, eps);
    let (t1p2, t2p2) = (t1 * t1, t2 * t2);
    let (t1p4, t2p4) = (t1p2 * t1p2, t2p2 * t2p2);
    let t2p6 = t2p4 * t2p2;
    let t2p8 = t2p4 * t2p4;
    let e2 = e * e;

    let l2_gain = (c(0.5) * t2p2 * (c(3.0) * e * (c(2.0) * t1p2 + t2p2) + c(2.0)), c(3.0) * e * t1 * t2p2 * t2);
    let hellinger_gain = (t2p2 * (c(3.0) * e * (t1p2 + t2p2) + T::one()), c(3.0) * e * t1 * t2p2 * t2);
    // θ¹ drifts shared between filters.
    let l2_mean_drift = |k: f64| {
        -c(0.25) * t1 * t2p2 * (c(3.0) * e2 * (c(4.0) * t1p4 - c(4.0) * t2p2 * t1p2 - c(k) * t2p4) + c(16.0) * e * t1p2 + c(4.0))
    };
    let hellinger_mean_drift = |k: f64| {
        -t1 * t2p2
            * (c(3.0) * e2 * (t1p4 + c(4.0) * t2p2 * t1p2 + c(k) * t2p4) + e * (c(4.0) * t1p2 + c(6.0) * t2p2) + T::one())
    };
    let hellinger_quartic = t2p4 * (c(15.0) * e2 * t1p4 + c(12.0) * e * t1p2 + T::one());
    let l2_quartic = t2p4 * (c(60.0) * e2 * t1p4 + c(48.0) * e * t1p2 + c(4.0));

    let (a1, a2, (b1, b2)) = match kind {
        FilterKind::VecL2 => (
            l2_mean_drift(3.0),
            -(c(9.0) * e2 * t2p8 + l2_quartic + c(6.0) * e * t2p6 * (c(9.0) * e * t1p2 + c(2.0)) - c(4.0)) / (c(8.0) * t2),
            l2_gain,
        ),
        FilterKind::JetL2 => (
            l2_mean_drift(9.0),
            (c(3.0) * e2 * t2p8 - c(4.0) * t2p4 * (c(15.0) * e2 * t1p4 + c(12.0) * e * t1p2 + T::one())
                - c(2.0) * e * t2p6 * (c(15.0) * e * t1p2 + c(2.0))
                + c(4.0))
                / (c(8.0) * t2),
            l2_gain,
        ),
        FilterKind::StratL2 => (
            l2_mean_drift(3.0),
            -(c(47.0) * e2 * t2p8 + l2_quartic + c(2.0) * e * t2p6 * (c(33.0) * e * t1p2 + c(8.0)) - c(4.0)) / (c(8.0) * t2),
            l2_gain,
        ),
        FilterKind::VecHellinger => (
            hellinger_mean_drift(6.0),
            -(c(27.0) * e2 * t2p8 + hellinger_quartic + c(9.0) * e * t2p6 * (c(6.0) * e * t1p2 + T::one()) - T::one())
                / (c(2.0) * t2),
            hellinger_gain,
        ),
        FilterKind::JetHellinger => (
            hellinger_mean_drift(3.0),
            -(c(18.0) * e2 * t2p8 + hellinger_quartic + c(3.0) * e * t2p6 * (c(15.0) * e * t1p2 + c(2.0)) - T::one())
                / (c(2.0) * t2),
            hellinger_gain,
        ),
        FilterKind::StratHellinger => (
            hellinger_mean_drift(6.0),
            -(c(36.0) * e2 * t2p8 + hellinger_quartic + c(9.0) * e * t2p6 * (c(6.0) * e * t1p2 + T::one()) - T::one())
                / (c(2.0) * t2),
            hellinger_gain,
        ),
        FilterKind::ItoAdf => (
            hellinger_mean_drift(3.0),
            -(c(9.0) * e2 * t2p8 + hellinger_quartic + c(3.0) * e * t2p6 * (c(15.0) * e * t1p2 + c(2.0)) - T::one())
                / (c(2.0) * t2),
            hellinger_gain,
        ),
        FilterKind::Ekf => {
            let slope = c(3.0) * e * t1p2 + T::one();
            (
                -t2p2 * slope * (t1 + e * t1p2 * t1),
                (T::one() - t2p4 * slope * slope) / (c(2.0) * t2),
                (t2p2 * slope, T::zero()),
            )
        }
    };
    ChartCoefficients {
        drift: DVector::from_vec(vec![a1, a2]),
        diffusion: DMatrix::from_column_slice(2, 1, &[b1, b2]),
    }
}
