//! Sampling and density evaluation for the distribution families used by the
//! samplers.
//!
//! Every gamma distribution in this crate is parameterised by (shape, rate).

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Smallest interval mass for which a truncated gamma is still sampled.
pub const MIN_TRUNCATED_MASS: f64 = 1e-12;

/// Interval mass above which truncated gamma draws use plain rejection.
const REJECTION_MASS: f64 = 0.1;

/// Student-t distribution rescaled so that its variance equals `variance`
/// whatever the degrees of freedom.
///
/// Equivalent to the scale mixture `X | ξ ~ N(mean, variance / ξ)` with
/// `ξ ~ Gamma(dof / 2, rate = (dof - 2) / 2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StandardizedT {
    mean: f64,
    variance: f64,
    dof: f64,
}

impl StandardizedT {
    pub fn new(mean: f64, variance: f64, dof: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid(format!("standardized t mean {mean} is not finite")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!(
                "standardized t variance must be positive, got {variance}"
            )));
        }
        if !(dof > 2.0 && dof.is_finite()) {
            return Err(Error::invalid(format!(
                "standardized t needs dof > 2 for a finite variance, got {dof}"
            )));
        }
        Ok(Self {
            mean,
            variance,
            dof,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// Two-stage draw: precision multiplier first, then the conditional normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let xi = sample_gamma(self.dof / 2.0, (self.dof - 2.0) / 2.0, rng);
        let z: f64 = StandardNormal.sample(rng);
        self.mean + z * (self.variance / xi).sqrt()
    }

    /// Same as [`sample`](Self::sample) but also returns the precision
    /// multiplier that generated the draw.
    pub fn sample_with_mixing<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let xi = sample_gamma(self.dof / 2.0, (self.dof - 2.0) / 2.0, rng);
        let z: f64 = StandardNormal.sample(rng);
        (self.mean + z * (self.variance / xi).sqrt(), xi)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        ln_standardized_t_pdf(x - self.mean, self.variance, self.dof)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }
}

/// Log normalising constant of the standardized t density with unit variance.
#[inline]
pub fn ln_standardized_t_norm(dof: f64) -> f64 {
    ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * ((dof - 2.0).ln() + LN_PI)
}

/// Log density of a centred standardized t at `resid`.
#[inline]
pub fn ln_standardized_t_pdf(resid: f64, variance: f64, dof: f64) -> f64 {
    ln_standardized_t_norm(dof) - 0.5 * variance.ln()
        - 0.5 * (dof + 1.0) * (resid * resid / ((dof - 2.0) * variance)).ln_1p()
}

/// Gamma(shape, rate) restricted to `[lower, upper]` and renormalised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedGamma {
    shape: f64,
    rate: f64,
    lower: f64,
    upper: f64,
    cdf_lower: f64,
    sf_upper: f64,
    mass: f64,
}

impl TruncatedGamma {
    pub fn new(shape: f64, rate: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma shape and rate must be positive and finite, got ({shape}, {rate})"
            )));
        }
        let lower = lower.max(0.0);
        if !(lower < upper) {
            return Err(Error::invalid(format!(
                "truncation bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        let cdf_lower = gamma_cdf(shape, rate, lower);
        let sf_upper = gamma_sf(shape, rate, upper);
        // 1 - F(l) - S(u), computed on whichever side loses less precision.
        let mass = if cdf_lower < 0.5 {
            (1.0 - cdf_lower - sf_upper).max(0.0)
        } else {
            (gamma_sf(shape, rate, lower) - sf_upper).max(0.0)
        };
        if !(mass >= MIN_TRUNCATED_MASS) {
            return Err(Error::DegenerateTruncation { lower, upper, mass });
        }
        Ok(Self {
            shape,
            rate,
            lower,
            upper,
            cdf_lower,
            sf_upper,
            mass,
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Untruncated probability of the interval.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !self.contains(x) || x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ln_gamma_pdf(x, self.shape, self.rate) - self.mass.ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            0.0
        } else if x >= self.upper {
            1.0
        } else {
            ((gamma_cdf(self.shape, self.rate, x) - self.cdf_lower) / self.mass).clamp(0.0, 1.0)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mass >= REJECTION_MASS {
            loop {
                let x = sample_gamma(self.shape, self.rate, rng);
                if self.contains(x) {
                    return x;
                }
            }
        }
        self.sample_by_inversion(rng)
    }

    fn sample_by_inversion<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        // Work in the tail whose probabilities are representable.
        let use_upper_tail = self.cdf_lower >= 0.5;
        let target = if use_upper_tail {
            self.sf_upper + (1.0 - u) * self.mass
        } else {
            self.cdf_lower + u * self.mass
        };
        let mut lo = self.lower;
        let mut hi = if self.upper.is_finite() {
            self.upper
        } else {
            let mut h = (self.lower.max(self.shape / self.rate)) * 2.0 + 1.0;
            while gamma_sf(self.shape, self.rate, h) > self.sf_upper + 1e-9 * self.mass {
                h *= 2.0;
            }
            h
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let below = if use_upper_tail {
                gamma_sf(self.shape, self.rate, mid) > target
            } else {
                gamma_cdf(self.shape, self.rate, mid) < target
            };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
        }
        (0.5 * (lo + hi)).clamp(self.lower, self.upper)
    }
}

/// Log density of Gamma(shape, rate).
#[inline]
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of Normal(mean, variance).
#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (std::f64::consts::TAU * variance).ln() - 0.5 * d * d / variance
}

/// Log density of Dirichlet(alpha) at a point of the simplex.
pub fn ln_dirichlet_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    if x.len() == 1 {
        return 0.0;
    }
    let total: f64 = alpha.iter().sum();
    let mut out = ln_gamma(total);
    for (&xi, &ai) in x.iter().zip(alpha) {
        if xi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        out += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    out
}

fn gamma_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(shape, rate * x)
    }
}

fn gamma_sf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma_ur(shape, rate * x)
    }
}

/// Draw from Gamma(shape, rate). Parameters are assumed valid.
#[inline]
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Draw a point on the simplex from Dirichlet(weights).
pub fn sample_dirichlet<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::invalid("Dirichlet needs at least one weight"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::invalid(format!(
            "Dirichlet weights must be positive, got {w}"
        )));
    }
    if weights.len() == 1 {
        return Ok(vec![1.0]);
    }
    let mut draws: Vec<f64> = weights.iter().map(|&w| sample_gamma(w, 1.0, rng)).collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        // Every gamma underflowed (tiny weights); fall back on the most likely vertex.
        let best = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        draws.iter_mut().enumerate().for_each(|(i, d)| *d = if i == best { 1.0 } else { 0.0 });
        return Ok(draws);
    }
    draws.iter_mut().for_each(|d| *d /= total);
    Ok(draws)
}

/// Draw an index from unnormalised log weights.
///
/// Weights are shifted by their maximum before exponentiation so that
/// uniformly tiny likelihoods never produce an all-zero vector.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let weight = |lw: f64| if max.is_finite() { (lw - max).exp() } else { 1.0 };
    let total: f64 = log_weights.iter().map(|&lw| weight(lw)).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &lw) in log_weights.iter().enumerate() {
        let p = weight(lw);
        if u < p {
            return i;
        }
        u -= p;
    }
    log_weights
        .iter()
        .rposition(|&lw| weight(lw) > 0.0)
        .unwrap_or(0)
}
