//! Ball-weight distributions with mean one and an analytic moment generating function.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightKind {
    /// Every ball has weight 1.
    Unit,
    /// Exponential with mean 1.
    Exponential,
    /// `q * G` where `G` counts Bernoulli(q) trials up to and including the first success.
    ScaledGeometric { q: f64 },
    /// Uniform on `[0, 2]`.
    UniformBounded,
}

impl WeightKind {
    /// A `lambda` strictly inside the domain where the MGF is finite.
    pub fn default_lambda(&self) -> f64 {
        match *self {
            WeightKind::Unit => 1.0,
            WeightKind::Exponential => 0.5,
            WeightKind::ScaledGeometric { q } => (1.0 / (1.0 - q)).ln() / 2.0,
            WeightKind::UniformBounded => 1.0,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            WeightKind::Unit => "unit".into(),
            WeightKind::Exponential => "exponential".into(),
            WeightKind::ScaledGeometric { q } => format!("scaled_geometric({q})"),
            WeightKind::UniformBounded => "uniform_bounded".into(),
        }
    }
}

/// A weight law together with the MGF parameter `lambda` at which
/// `E[exp(lambda * W)]` is finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDistribution {
    kind: WeightKind,
    lambda: f64,
}

impl WeightDistribution {
    pub fn unit() -> Self {
        Self::new(WeightKind::Unit).expect("unit weights are always valid")
    }

    pub fn exponential() -> Self {
        Self::new(WeightKind::Exponential).expect("exponential weights are always valid")
    }

    pub fn new(kind: WeightKind) -> Result<Self> {
        if let WeightKind::ScaledGeometric { q } = kind {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!(
                    "scaled geometric success probability must lie in (0, 1), got {q}"
                )));
            }
        }
        Self::with_lambda(kind, kind.default_lambda())
    }

    pub fn with_lambda(kind: WeightKind, lambda: f64) -> Result<Self> {
        if let WeightKind::ScaledGeometric { q } = kind {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!(
                    "scaled geometric success probability must lie in (0, 1), got {q}"
                )));
            }
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        let dist = Self { kind, lambda };
        dist.mgf(lambda)?;
        Ok(dist)
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            WeightKind::Unit => 0.0,
            WeightKind::Exponential => 1.0,
            WeightKind::ScaledGeometric { q } => 1.0 - q,
            WeightKind::UniformBounded => 1.0 / 3.0,
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self.kind, WeightKind::Unit)
    }

    /// Draws one weight. Unit weights consume no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::Exponential => Exp1.sample(rng),
            WeightKind::ScaledGeometric { q } => {
                let failures = Geometric::new(q)
                    .expect("q validated at construction")
                    .sample(rng);
                q * (failures as f64 + 1.0)
            }
            WeightKind::UniformBounded => rng.random_range(0.0..2.0),
        }
    }

    /// `E[exp(z W)]` in closed form.
    pub fn mgf(&self, z: f64) -> Result<f64> {
        let diverges = || Error::Domain {
            dist: self.kind.label(),
            z,
        };
        if z == 0.0 {
            return Ok(1.0);
        }
        let value = match self.kind {
            WeightKind::Unit => z.exp(),
            WeightKind::Exponential => {
                if z >= 1.0 {
                    return Err(diverges());
                }
                1.0 / (1.0 - z)
            }
            WeightKind::ScaledGeometric { q } => {
                let e = (z * q).exp();
                let denom = 1.0 - (1.0 - q) * e;
                if denom <= 0.0 {
                    return Err(diverges());
                }
                q * e / denom
            }
            WeightKind::UniformBounded => (2.0 * z).exp_m1() / (2.0 * z),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(diverges())
        }
    }

    /// `S = 2 max{ ((8/lambda) ln(8/lambda))^4, 2 E[exp(lambda W)], 1/2 }`, the
    /// constant for which `E[exp(a k W)] <= 1 + a k + S a^2 k^2` holds for
    /// `a in (0, min(lambda/2, 1))`, `k in [-1, 1]`.
    pub fn moment_bound_s(&self) -> Result<f64> {
        let r = 8.0 / self.lambda;
        let tail = (r * r.ln()).powi(4);
        let mgf = self.mgf(self.lambda)?;
        Ok(2.0 * tail.max(2.0 * mgf).max(0.5))
    }
}
