//! Lamé parameter fields and analytic phantoms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Closed-form scalar profile used to build phantoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// base + amplitude · exp(−|x−center|²/(2 width²))
    Gaussian { base: f64, amplitude: f64, center: [f64; 3], width: f64 },
    /// base + amplitude · sin(freq x₁) cos(freq x₂)
    Trig { base: f64, amplitude: f64, freq: f64 },
    /// base + slope · x_axis
    Linear { base: f64, slope: f64, axis: usize },
}

impl Profile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Gaussian { base, amplitude, center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                base + amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            Profile::Trig { base, amplitude, freq } => base + amplitude * (freq * x[0]).sin() * (freq * x[1]).cos(),
            Profile::Linear { base, slope, axis } => base + slope * x[axis],
        }
    }

    pub fn sample(&self, grid: Grid) -> Field {
        Field::scalar_fn(grid, |x| self.eval(x))
    }
}

/// Analytic (λ, μ) pair that can be sampled on any grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub lambda: Profile,
    pub mu: Profile,
}

impl Phantom {
    pub fn constant(lambda: f64, mu: f64) -> Self {
        Phantom { lambda: Profile::Constant { value: lambda }, mu: Profile::Constant { value: mu } }
    }

    /// Gaussian inclusions with μ ∈ [1,2] and λ ∈ [1,3] on the unit box.
    pub fn inclusions(dim: usize) -> Self {
        let (cm, cl) = if dim == 2 {
            ([0.45, 0.55, 0.0], [0.55, 0.4, 0.0])
        } else {
            ([0.45, 0.55, 0.5], [0.55, 0.4, 0.5])
        };
        Phantom {
            mu: Profile::Gaussian { base: 1.0, amplitude: 1.0, center: cm, width: 0.2 },
            lambda: Profile::Gaussian { base: 1.0, amplitude: 2.0, center: cl, width: 0.2 },
        }
    }
}

/// The pair (λ, μ) sampled on a grid, with their value bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LameParameters {
    pub lambda: Field,
    pub mu: Field,
    /// (m, M) with m ≤ λ, μ ≤ M everywhere.
    pub bounds: (f64, f64),
    /// Closed form the samples came from, when known.
    pub model: Option<Phantom>,
}

impl LameParameters {
    pub fn new(lambda: Field, mu: Field) -> Result<Self> {
        lambda.grid().check_same(mu.grid())?;
        lambda.expect_scalar()?;
        mu.expect_scalar()?;
        lambda.expect_real()?;
        mu.expect_real()?;
        if !(lambda.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Lamé parameters".into()));
        }
        if mu.min() <= 0.0 {
            return Err(Error::NonPositive { what: "mu", min: mu.min() });
        }
        if lambda.min() <= 0.0 {
            return Err(Error::NonPositive { what: "lambda", min: lambda.min() });
        }
        let bounds = (lambda.min().min(mu.min()), lambda.max().max(mu.max()));
        Ok(LameParameters { lambda, mu, bounds, model: None })
    }

    pub fn from_phantom(grid: Grid, phantom: &Phantom) -> Result<Self> {
        let mut p = LameParameters::new(phantom.lambda.sample(grid), phantom.mu.sample(grid))?;
        p.model = Some(phantom.clone());
        Ok(p)
    }

    pub fn constant(grid: Grid, lambda: f64, mu: f64) -> Result<Self> {
        LameParameters::from_phantom(grid, &Phantom::constant(lambda, mu))
    }

    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }
}
