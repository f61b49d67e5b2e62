//! Built-in pointwise maps used as student activations and teacher links.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Slope of the smoothed sign map `tanh(SMOOTH_SIGN_SLOPE * x)`.
pub const SMOOTH_SIGN_SLOPE: f64 = 4.0;

/// A scalar nonlinearity applied entrywise.
///
/// The same set serves as student activation `σ` and teacher link `g`; the
/// configuration names are the lowercase identifiers listed in [`Pointwise::ALL`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pointwise {
    Relu,
    Erf,
    Tanh,
    Sin,
    Identity,
    /// Second normalized Hermite polynomial `(x² - 1)/√2`.
    H2,
    /// Third normalized Hermite polynomial `(x³ - 3x)/√6`.
    H3,
    Sign,
    /// `tanh(4x)`, a smooth surrogate of the sign function.
    SmoothSign,
    Square,
}

impl Pointwise {
    /// Every built-in map, in a stable order.
    pub const ALL: [Pointwise; 10] = [
        Pointwise::Relu,
        Pointwise::Erf,
        Pointwise::Tanh,
        Pointwise::Sin,
        Pointwise::Identity,
        Pointwise::H2,
        Pointwise::H3,
        Pointwise::Sign,
        Pointwise::SmoothSign,
        Pointwise::Square,
    ];

    /// Configuration identifier of the map.
    pub fn name(self) -> &'static str {
        match self {
            Pointwise::Relu => "relu",
            Pointwise::Erf => "erf",
            Pointwise::Tanh => "tanh",
            Pointwise::Sin => "sin",
            Pointwise::Identity => "identity",
            Pointwise::H2 => "h2",
            Pointwise::H3 => "h3",
            Pointwise::Sign => "sign",
            Pointwise::SmoothSign => "smooth_sign",
            Pointwise::Square => "square",
        }
    }

    /// Evaluates the map at `x`.
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Pointwise::Relu => x.max(0.0),
            Pointwise::Erf => libm::erf(x),
            Pointwise::Tanh => x.tanh(),
            Pointwise::Sin => x.sin(),
            Pointwise::Identity => x,
            Pointwise::H2 => (x * x - 1.0) / std::f64::consts::SQRT_2,
            Pointwise::H3 => (x * x * x - 3.0 * x) / 6f64.sqrt(),
            Pointwise::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Pointwise::SmoothSign => (SMOOTH_SIGN_SLOPE * x).tanh(),
            Pointwise::Square => x * x,
        }
    }

    /// Evaluates the derivative at `x`, using the right derivative at kinks.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Pointwise::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Pointwise::Erf => std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp(),
            Pointwise::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Pointwise::Sin => x.cos(),
            Pointwise::Identity => 1.0,
            Pointwise::H2 => std::f64::consts::SQRT_2 * x,
            Pointwise::H3 => (3.0 * x * x - 3.0) / 6f64.sqrt(),
            Pointwise::Sign => 0.0,
            Pointwise::SmoothSign => {
                let t = (SMOOTH_SIGN_SLOPE * x).tanh();
                SMOOTH_SIGN_SLOPE * (1.0 - t * t)
            }
            Pointwise::Square => 2.0 * x,
        }
    }

    /// Points where the map or its derivative is not smooth (or varies on a
    /// scale much shorter than one), so Gaussian integrals must be split there.
    pub fn breakpoints(self) -> &'static [f64] {
        match self {
            Pointwise::Relu | Pointwise::Sign | Pointwise::SmoothSign => &[0.0],
            _ => &[],
        }
    }

    /// True when the map is odd, `f(-x) = -f(x)`.
    pub fn is_odd(self) -> bool {
        matches!(
            self,
            Pointwise::Erf
                | Pointwise::Tanh
                | Pointwise::Sin
                | Pointwise::Identity
                | Pointwise::H3
                | Pointwise::Sign
                | Pointwise::SmoothSign
        )
    }
}

impl fmt::Display for Pointwise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pointwise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pointwise::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pointwise map `{s}`")))
    }
}
