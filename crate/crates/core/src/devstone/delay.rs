use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How per-atomic transition delays (CPU seconds) are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayDistribution {
    /// Every atomic gets `k`.
    Constant(f64),
    /// Uniform on `[0, k]`.
    Uniform(f64),
    /// Chi-square with two degrees of freedom (mean 2).
    ChiSquare2,
}

impl DelayDistribution {
    /// One draw given `u` uniform on `[0, 1)`.
    fn from_unit(self, u: f64) -> f64 {
        match self {
            Self::Constant(k) => k,
            Self::Uniform(k) => k * u,
            // inverse CDF of chi-square(2), an exponential with mean 2
            Self::ChiSquare2 => -2.0 * (1.0 - u).ln(),
        }
    }
}

impl fmt::Display for DelayDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(k) => write!(f, "constant:{k}"),
            Self::Uniform(k) => write!(f, "uniform:{k}"),
            Self::ChiSquare2 => f.write_str("chi2"),
        }
    }
}

impl FromStr for DelayDistribution {
    type Err = String;

    /// `constant:K`, `uniform:K` or `chi2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((kind, arg)) => (kind, Some(arg)),
            None => (s, None),
        };
        let k = || -> Result<f64, String> {
            let arg = arg.ok_or_else(|| format!("{kind} needs a parameter, e.g. {kind}:2"))?;
            match arg.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
                _ => Err(format!("invalid delay parameter {arg:?}")),
            }
        };
        match kind {
            "constant" | "const" => Ok(Self::Constant(k()?)),
            "uniform" => Ok(Self::Uniform(k()?)),
            "chi2" | "chi_square" | "chisquare" => Ok(Self::ChiSquare2),
            _ => Err(format!("unknown delay distribution {s:?}")),
        }
    }
}

/// Draws one delay per atomic, in order. The same `(dist, atomics, seed)`
/// always yields the same assignment.
pub fn sample_delays<S: AsRef<str>>(dist: DelayDistribution, atomics: &[S], seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    atomics
        .iter()
        .map(|name| {
            let delay = match dist {
                DelayDistribution::Constant(k) => k,
                _ => dist.from_unit(rng.random::<f64>()),
            };
            (name.as_ref().to_owned(), delay)
        })
        .collect()
}
