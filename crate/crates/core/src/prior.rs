//! Prior distributions and their hyperparameters.
//!
//! ```text
//! π ~ Dirichlet(w_1..w_g)
//! μ_k ~ N(ζ, 1/κ)
//! τ_k | λ ~ Gamma(c, λ),   λ ~ Gamma(a, b)
//! ν_k ~ Gamma(α_k, β_k) truncated to [2, 30]
//! φ ~ uniform (unit density) on the stability region
//! ```

use statrs::function::gamma::ln_gamma;

use crate::data::value_range;
use crate::distributions::{ln_dirichlet_pdf, ln_normal_pdf, TruncatedGamma};
use crate::error::{Error, Result};
use crate::model::{self, MAX_DOF, MIN_DOF};

pub const DEFAULT_A: f64 = 0.2;
pub const DEFAULT_C: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PriorConfig {
    /// Centre of the component-mean prior.
    pub zeta: f64,
    /// Precision of the component-mean prior.
    pub kappa: f64,
    /// Shape of the precision prior.
    pub c: f64,
    /// Shape of the hyperprior on the precision rate.
    pub a: f64,
    /// Rate of the hyperprior on the precision rate.
    pub b: f64,
    pub dirichlet: Vec<f64>,
    pub nu_shape: Vec<f64>,
    pub nu_rate: Vec<f64>,
    /// Pin every shift to zero and drop the mean block.
    pub fix_means_to_zero: bool,
    /// Optional box `|φ_ki| <= bound` intersected with the stability region.
    pub ar_bound: Option<f64>,
}

impl PriorConfig {
    pub fn g(&self) -> usize {
        self.dirichlet.len()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.g();
        if g == 0 {
            return Err(Error::invalid("prior has no components"));
        }
        if self.nu_shape.len() != g || self.nu_rate.len() != g {
            return Err(Error::invalid(format!(
                "prior for g = {g} has {} dof shapes and {} dof rates",
                self.nu_shape.len(),
                self.nu_rate.len()
            )));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(positive(self.kappa) && positive(self.c) && positive(self.a) && positive(self.b)) {
            return Err(Error::invalid("kappa, c, a and b must be positive"));
        }
        if !self.zeta.is_finite() {
            return Err(Error::invalid("zeta must be finite"));
        }
        if !self.dirichlet.iter().all(|w| positive(*w)) {
            return Err(Error::invalid("Dirichlet weights must be positive"));
        }
        if let Some(bound) = self.ar_bound {
            if !positive(bound) {
                return Err(Error::invalid("AR bound must be positive"));
            }
        }
        for k in 0..g {
            self.nu_prior(k)?;
        }
        Ok(())
    }

    /// Truncated-gamma prior of `ν_k`.
    pub fn nu_prior(&self, k: usize) -> Result<TruncatedGamma> {
        TruncatedGamma::new(self.nu_shape[k], self.nu_rate[k], MIN_DOF, MAX_DOF)
    }

    pub fn ar_within_bound(&self, coeffs: &[f64]) -> bool {
        match self.ar_bound {
            Some(bound) => coeffs.iter().all(|c| c.abs() <= bound),
            None => true,
        }
    }

    /// Log prior density of the precisions with the rate hyperparameter
    /// integrated out analytically.
    pub fn ln_precision_prior(&self, precisions: &[f64]) -> f64 {
        if precisions.iter().any(|t| *t <= 0.0) {
            return f64::NEG_INFINITY;
        }
        let g = precisions.len() as f64;
        let total: f64 = precisions.iter().sum();
        let shape = self.a + g * self.c;
        precisions
            .iter()
            .map(|t| (self.c - 1.0) * t.ln() - ln_gamma(self.c))
            .sum::<f64>()
            + self.a * self.b.ln()
            - ln_gamma(self.a)
            + ln_gamma(shape)
            - shape * (self.b + total).ln()
    }

    /// Joint log prior density at a parameter point (λ marginalised).
    ///
    /// AR coefficients carry unit density on the stability region, so they
    /// contribute 0 or `-inf`.
    pub fn ln_density(
        &self,
        weights: &[f64],
        means: &[f64],
        precisions: &[f64],
        ar: &[Vec<f64>],
        dofs: &[f64],
    ) -> Result<f64> {
        let mut total = ln_dirichlet_pdf(weights, &self.dirichlet);
        if !self.fix_means_to_zero {
            total += means
                .iter()
                .map(|m| ln_normal_pdf(*m, self.zeta, 1.0 / self.kappa))
                .sum::<f64>();
        }
        total += self.ln_precision_prior(precisions);
        for (k, nu) in dofs.iter().enumerate() {
            total += self.nu_prior(k)?.ln_pdf(*nu);
        }
        if !ar.iter().all(|c| self.ar_within_bound(c)) || !model::is_stable(weights, ar)? {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(total)
    }
}

/// Gamma (shape, rate) with the given mode and variance.
///
/// Solves `(α - 1) / β = mode` and `α / β² = variance`; `β` is the positive
/// root of `variance β² - mode β - 1 = 0`.
pub fn gamma_from_mode_and_variance(mode: f64, variance: f64) -> Result<(f64, f64)> {
    if !(variance > 0.0 && variance.is_finite() && mode > 0.0 && mode.is_finite()) {
        return Err(Error::invalid(format!(
            "no gamma prior with mode {mode} and variance {variance}"
        )));
    }
    let rate = (mode + (mode * mode + 4.0 * variance).sqrt()) / (2.0 * variance);
    let shape = 1.0 + mode * rate;
    if !(rate > 0.0 && shape > 0.0) {
        return Err(Error::invalid(format!(
            "mode {mode} with variance {variance} has no positive-shape gamma solution"
        )));
    }
    Ok((shape, rate))
}

/// Data-driven default hyperparameters.
///
/// `nu_center` holds one prior mode per component, or a single value shared
/// by all components.
pub fn default_priors(
    data: &[f64],
    g: usize,
    nu_center: &[f64],
    nu_target_var: f64,
) -> Result<PriorConfig> {
    if g == 0 {
        return Err(Error::invalid("g must be at least 1"));
    }
    let range = value_range(data);
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::Data(format!(
            "series range is {range}; a constant series cannot centre the priors"
        )));
    }
    let centers: Vec<f64> = match nu_center.len() {
        1 => vec![nu_center[0]; g],
        n if n == g => nu_center.to_vec(),
        n => {
            return Err(Error::invalid(format!(
                "{n} dof centres given for {g} components"
            )))
        }
    };
    let mut nu_shape = Vec::with_capacity(g);
    let mut nu_rate = Vec::with_capacity(g);
    for center in centers {
        let (shape, rate) = gamma_from_mode_and_variance(center, nu_target_var)?;
        nu_shape.push(shape);
        nu_rate.push(rate);
    }
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let (a, c) = (DEFAULT_A, DEFAULT_C);
    let priors = PriorConfig {
        zeta: min + range / 2.0,
        kappa: 1.0 / range,
        c,
        a,
        b: 100.0 * a / (c * range * range),
        dirichlet: vec![1.0; g],
        nu_shape,
        nu_rate,
        fix_means_to_zero: false,
        ar_bound: None,
    };
    priors.validate()?;
    Ok(priors)
}
