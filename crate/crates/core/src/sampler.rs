//! Data-augmented Gibbs sampler with Metropolis steps for the AR
//! coefficients and degrees of freedom.
//!
//! One sweep updates, in order: allocations, mixing variables ξ, weights,
//! means, precisions, the precision rate λ, AR coefficients (random walk)
//! and degrees of freedom (independence sampler with the prior as proposal).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::{
    ln_standardized_t_norm, sample_dirichlet, sample_gamma,
    sample_log_categorical, TruncatedGamma,
};
use crate::error::{Error, Result};
use crate::model::{self, log_sum_exp, Location, TMarSpec, MAX_DOF, MIN_DOF};
use crate::prior::PriorConfig;
use statrs::function::gamma::ln_gamma;

/// Target acceptance rate of the adaptive random walk.
pub const TARGET_ACCEPTANCE: f64 = 0.25;
pub const DEFAULT_AR_STEP: f64 = 0.05;
const MIN_AR_STEP: f64 = 1e-8;
const MAX_AR_STEP: f64 = 4.0;
const INIT_ATTEMPTS: usize = 10_000;
const INITIAL_DOF: f64 = 10.0;

/// Model parameters at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub weights: Vec<f64>,
    /// Component means `μ_k`; the shift is `μ_k (1 - Σ φ_ki)`.
    pub means: Vec<f64>,
    /// Precisions `τ_k = 1 / σ_k²`.
    pub precisions: Vec<f64>,
    pub ar: Vec<Vec<f64>>,
    pub dofs: Vec<f64>,
    pub lambda: f64,
}

impl Params {
    pub fn g(&self) -> usize {
        self.weights.len()
    }

    pub fn orders(&self) -> Vec<usize> {
        self.ar.iter().map(Vec::len).collect()
    }

    pub fn max_order(&self) -> usize {
        self.ar.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn ar_complement(&self, k: usize) -> f64 {
        1.0 - self.ar[k].iter().sum::<f64>()
    }

    /// Residual of component `k` at (zero-based) time `t`.
    #[inline]
    pub fn residual(&self, y: &[f64], k: usize, t: usize) -> f64 {
        let mut r = y[t] - self.means[k] * self.ar_complement(k);
        for (i, phi) in self.ar[k].iter().enumerate() {
            r -= phi * y[t - 1 - i];
        }
        r
    }

    pub fn to_spec(&self) -> Result<TMarSpec> {
        TMarSpec::new(
            self.weights.clone(),
            self.means.iter().map(|m| Location::Mean(*m)).collect(),
            self.precisions.iter().map(|t| 1.0 / t.sqrt()).collect(),
            self.ar.clone(),
            self.dofs.clone(),
        )
    }

    /// Mixture log-likelihood of `y[start..]` with the latent variables
    /// integrated out.
    pub fn ln_likelihood(&self, y: &[f64], start: usize) -> f64 {
        let g = self.g();
        let consts: Vec<f64> = (0..g)
            .map(|k| {
                self.weights[k].ln() + 0.5 * self.precisions[k].ln()
                    + ln_standardized_t_norm(self.dofs[k])
            })
            .collect();
        let mut terms = vec![0.0; g];
        let mut total = 0.0;
        for t in start..y.len() {
            for k in 0..g {
                let e = self.residual(y, k, t);
                let nu = self.dofs[k];
                terms[k] = consts[k]
                    - 0.5 * (nu + 1.0) * (self.precisions[k] * e * e / (nu - 2.0)).ln_1p();
            }
            total += log_sum_exp(&terms);
        }
        total
    }

    pub fn is_stable(&self) -> Result<bool> {
        model::is_stable(&self.weights, &self.ar)
    }

    /// Checks every invariant a stored draw must satisfy.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let finite = self.weights.iter().all(|x| x.is_finite())
            && self.means.iter().all(|x| x.is_finite())
            && self.ar.iter().flatten().all(|x| x.is_finite())
            && self.lambda.is_finite();
        if !finite {
            return Err("non-finite parameter".into());
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(format!("weights {:?} leave the simplex", self.weights));
        }
        if self.precisions.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(format!("precisions {:?} not positive", self.precisions));
        }
        if self.dofs.iter().any(|nu| !(*nu > MIN_DOF && *nu <= MAX_DOF)) {
            return Err(format!("degrees of freedom {:?} out of range", self.dofs));
        }
        match self.is_stable() {
            Ok(true) => Ok(()),
            Ok(false) => Err("mixture is not stable".into()),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Latent allocations and precision multipliers for `t = start..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub allocations: Vec<usize>,
    pub xis: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub params: Params,
    pub latent: LatentState,
}

/// Blocks held fixed during a sweep (reduced runs, tests).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Frozen {
    pub weights: bool,
    pub means: bool,
    pub precisions: bool,
    pub lambda: bool,
    pub ar: Vec<bool>,
    pub dofs: Vec<bool>,
    pub latent: bool,
}

impl Frozen {
    pub fn none(g: usize) -> Self {
        Self {
            ar: vec![false; g],
            dofs: vec![false; g],
            ..Self::default()
        }
    }

    fn ar(&self, k: usize) -> bool {
        self.ar.get(k).copied().unwrap_or(false)
    }

    fn dof(&self, k: usize) -> bool {
        self.dofs.get(k).copied().unwrap_or(false)
    }
}

/// Per-component sufficient statistics under the current allocations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComponentStats {
    pub count: usize,
    /// `Σ ξ_t`
    pub xi_sum: f64,
    /// `Σ ln ξ_t`
    pub ln_xi_sum: f64,
    /// `Σ ξ_t r_t` with `r_t` the AR residual at zero mean.
    pub xi_raw_sum: f64,
    /// `Σ ξ_t e_t²` with `e_t` the full residual.
    pub xi_sq_sum: f64,
}

/// Accepted/attempted counts for one Metropolis block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AcceptanceCounter {
    pub accepted: usize,
    pub attempted: usize,
}

impl AcceptanceCounter {
    pub fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        self.accepted += usize::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// Outcome of one sweep; `None` marks frozen blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepOutcome {
    pub weights: Option<bool>,
    pub ar: Vec<Option<bool>>,
    pub dofs: Vec<Option<bool>>,
}

/// Gibbs sampler bound to a series, an effective window and a prior.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    y: &'a [f64],
    start: usize,
    priors: &'a PriorConfig,
    nu_priors: Vec<TruncatedGamma>,
    /// Random-walk standard deviations per component.
    pub steps: Vec<f64>,
    pub frozen: Frozen,
}

impl<'a> Sampler<'a> {
    /// `start` is the first (zero-based) time index modelled; it must be at
    /// least the largest order the sampler will meet.
    pub fn new(y: &'a [f64], start: usize, priors: &'a PriorConfig) -> Result<Self> {
        priors.validate()?;
        if start >= y.len() {
            return Err(Error::InsufficientHistory {
                needed: start + 1,
                got: y.len(),
            });
        }
        let g = priors.g();
        let nu_priors = (0..g).map(|k| priors.nu_prior(k)).collect::<Result<_>>()?;
        Ok(Self {
            y,
            start,
            priors,
            nu_priors,
            steps: vec![DEFAULT_AR_STEP; g],
            frozen: Frozen::none(g),
        })
    }

    pub fn with_steps(mut self, steps: Vec<f64>) -> Self {
        self.steps = steps;
        self
    }

    pub fn y(&self) -> &'a [f64] {
        self.y
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn n_effective(&self) -> usize {
        self.y.len() - self.start
    }

    pub fn priors(&self) -> &'a PriorConfig {
        self.priors
    }

    pub fn nu_prior(&self, k: usize) -> &TruncatedGamma {
        &self.nu_priors[k]
    }

    fn check_state(&self, state: &ChainState) -> Result<()> {
        let g = self.priors.g();
        let p = &state.params;
        if p.g() != g || p.means.len() != g || p.precisions.len() != g || p.ar.len() != g || p.dofs.len() != g {
            return Err(Error::invalid(format!(
                "state has {} components, prior has {g}",
                p.g()
            )));
        }
        if p.max_order() > self.start {
            return Err(Error::InsufficientHistory {
                needed: p.max_order(),
                got: self.start,
            });
        }
        let n = self.n_effective();
        if state.latent.allocations.len() != n || state.latent.xis.len() != n {
            return Err(Error::invalid(format!(
                "latent state covers {} points, window has {n}",
                state.latent.allocations.len()
            )));
        }
        Ok(())
    }

    /// Dispersed but stable starting point.
    pub fn initialize<R: Rng + ?Sized>(&self, orders: &[usize], rng: &mut R) -> Result<ChainState> {
        let g = self.priors.g();
        if orders.len() != g {
            return Err(Error::invalid(format!(
                "{} orders given for {g} components",
                orders.len()
            )));
        }
        if let Some(p) = orders.iter().find(|p| **p > self.start) {
            return Err(Error::InsufficientHistory {
                needed: *p,
                got: self.start,
            });
        }
        let window = &self.y[self.start..];
        let mut sorted = window.to_vec();
        sorted.sort_by(f64::total_cmp);
        let means: Vec<f64> = if self.priors.fix_means_to_zero {
            vec![0.0; g]
        } else {
            (0..g)
                .map(|k| {
                    let q = (k as f64 + 0.5) / g as f64;
                    sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)]
                })
                .collect()
        };
        let n = window.len() as f64;
        let mean = window.iter().sum::<f64>() / n;
        let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::Data("series has zero variance".into()));
        }
        let weights = vec![1.0 / g as f64; g];
        let mut ar = None;
        for _ in 0..INIT_ATTEMPTS {
            let candidate: Vec<Vec<f64>> = orders
                .iter()
                .map(|&p| (0..p).map(|_| rng.random_range(-0.5..0.5)).collect())
                .collect();
            if candidate.iter().all(|c| self.priors.ar_within_bound(c))
                && model::is_stable(&weights, &candidate)?
            {
                ar = Some(candidate);
                break;
            }
        }
        let ar = ar.ok_or_else(|| {
            Error::numerical(format!(
                "no stable starting AR coefficients after {INIT_ATTEMPTS} attempts"
            ))
        })?;
        let precisions = vec![1.0 / var; g];
        let lambda = (self.priors.a + g as f64 * self.priors.c)
            / (self.priors.b + precisions.iter().sum::<f64>());
        let params = Params {
            weights,
            means,
            precisions,
            ar,
            dofs: vec![INITIAL_DOF; g],
            lambda,
        };
        let allocations = (0..window.len()).map(|_| rng.random_range(0..g)).collect();
        Ok(ChainState {
            params,
            latent: LatentState {
                allocations,
                xis: vec![1.0; window.len()],
            },
        })
    }

    /// Start at `hint`'s weights, means, precisions and dofs, with each AR
    /// block truncated or zero-padded to `orders` and latents drawn from
    /// their exact conditional. Falls back to [`Sampler::initialize`] when
    /// the adjusted AR blocks are not admissible.
    pub fn initialize_near<R: Rng + ?Sized>(
        &self,
        hint: &Params,
        orders: &[usize],
        rng: &mut R,
    ) -> Result<ChainState> {
        let g = self.priors.g();
        if hint.g() != g || orders.len() != g {
            return Err(Error::invalid(format!(
                "starting point has {} components, {} orders given for {g}",
                hint.g(),
                orders.len()
            )));
        }
        let ar: Vec<Vec<f64>> = hint
            .ar
            .iter()
            .zip(orders)
            .map(|(c, &p)| (0..p).map(|i| c.get(i).copied().unwrap_or(0.0)).collect())
            .collect();
        let admissible = ar.iter().all(|c| self.priors.ar_within_bound(c))
            && model::is_stable(&hint.weights, &ar)?;
        let mut state = self.initialize(orders, rng)?;
        if !admissible {
            return Ok(state);
        }
        state.params = Params {
            ar,
            ..hint.clone()
        };
        if self.priors.fix_means_to_zero {
            state.params.means = vec![0.0; g];
        }
        self.refresh_latents(&mut state, rng);
        Ok(state)
    }

    /// Sufficient statistics for every component.
    pub fn component_stats(&self, state: &ChainState) -> Vec<ComponentStats> {
        let p = &state.params;
        let mut stats = vec![ComponentStats::default(); p.g()];
        for (i, (&k, &xi)) in state
            .latent
            .allocations
            .iter()
            .zip(&state.latent.xis)
            .enumerate()
        {
            let t = self.start + i;
            let e = p.residual(self.y, k, t);
            let raw = e + p.means[k] * p.ar_complement(k);
            let s = &mut stats[k];
            s.count += 1;
            s.xi_sum += xi;
            s.ln_xi_sum += xi.ln();
            s.xi_raw_sum += xi * raw;
            s.xi_sq_sum += xi * e * e;
        }
        stats
    }

    pub fn counts(&self, state: &ChainState) -> Vec<usize> {
        let mut counts = vec![0; state.params.g()];
        for &k in &state.latent.allocations {
            counts[k] += 1;
        }
        counts
    }

    /// Normalised allocation probabilities at window position `i` given ξ.
    pub fn allocation_probabilities(&self, state: &ChainState, i: usize) -> Vec<f64> {
        let p = &state.params;
        let consts = allocation_constants(p);
        let xi = state.latent.xis[i];
        let ln_xi = xi.ln();
        let lw: Vec<f64> = (0..p.g())
            .map(|k| allocation_log_weight(p, &consts, self.y, k, self.start + i, xi, ln_xi))
            .collect();
        let m = log_sum_exp(&lw);
        lw.iter().map(|w| (w - m).exp()).collect()
    }

    /// Draw every allocation given ξ and the parameters.
    ///
    /// The weights include the Gamma(ν_k/2, (ν_k-2)/2) density of ξ_t, which
    /// matters whenever the components' degrees of freedom differ.
    pub fn update_allocations<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let p = &state.params;
        let g = p.g();
        if g == 1 {
            state.latent.allocations.iter_mut().for_each(|z| *z = 0);
            return;
        }
        let consts = allocation_constants(p);
        let mut lw = vec![0.0; g];
        for i in 0..state.latent.allocations.len() {
            let xi = state.latent.xis[i];
            let ln_xi = xi.ln();
            for (k, w) in lw.iter_mut().enumerate() {
                *w = allocation_log_weight(p, &consts, self.y, k, self.start + i, xi, ln_xi);
            }
            state.latent.allocations[i] = sample_log_categorical(&lw, rng);
        }
    }

    /// ξ_t ~ Gamma((ν+1)/2, τ e²/2 + (ν-2)/2) for the allocated component.
    pub fn update_xi<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let p = &state.params;
        for (i, xi) in state.latent.xis.iter_mut().enumerate() {
            let k = state.latent.allocations[i];
            let e = p.residual(self.y, k, self.start + i);
            let nu = p.dofs[k];
            let rate = 0.5 * p.precisions[k] * e * e + 0.5 * (nu - 2.0);
            debug_assert!(rate > 0.0);
            *xi = sample_gamma(0.5 * (nu + 1.0), rate, rng);
        }
    }

    /// Redraw `(z, ξ)` jointly from their conditional given the parameters:
    /// z_t from the marginal t densities, then ξ_t given z_t.
    pub fn refresh_latents<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let p = &state.params;
        let g = p.g();
        let consts: Vec<f64> = (0..g)
            .map(|k| {
                p.weights[k].ln() + 0.5 * p.precisions[k].ln() + ln_standardized_t_norm(p.dofs[k])
            })
            .collect();
        let mut lw = vec![0.0; g];
        for i in 0..state.latent.allocations.len() {
            let t = self.start + i;
            for (k, w) in lw.iter_mut().enumerate() {
                let e = p.residual(self.y, k, t);
                let nu = p.dofs[k];
                *w = consts[k] - 0.5 * (nu + 1.0) * (p.precisions[k] * e * e / (nu - 2.0)).ln_1p();
            }
            state.latent.allocations[i] = if g == 1 { 0 } else { sample_log_categorical(&lw, rng) };
        }
        self.update_xi(state, rng);
    }

    /// Dirichlet parameters of the weight conditional, ignoring stability.
    pub fn weight_posterior(&self, state: &ChainState) -> Vec<f64> {
        self.counts(state)
            .iter()
            .zip(&self.priors.dirichlet)
            .map(|(n, w)| w + *n as f64)
            .collect()
    }

    /// The weight conditional is Dirichlet(w + n) restricted to the stable
    /// set. A Dirichlet proposal accepted only when the mixture stays stable
    /// is an exact Metropolis step for it.
    pub fn update_weights<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<bool> {
        let alpha = self.weight_posterior(state);
        let candidate = sample_dirichlet(&alpha, rng)?;
        if candidate.iter().any(|w| !(*w > 0.0)) {
            return Ok(false);
        }
        if model::is_stable(&candidate, &state.params.ar)? {
            state.params.weights = candidate;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Normal conditional of `μ_k` as (mean, variance).
    pub fn mean_conditional(&self, state: &ChainState, stats: &[ComponentStats], k: usize) -> (f64, f64) {
        let p = &state.params;
        let tau = p.precisions[k];
        let b = p.ar_complement(k);
        let s = &stats[k];
        let (kappa, zeta) = (self.priors.kappa, self.priors.zeta);
        // ē_k d_k + c_k collapses to Σ ξ_t r_t
        let precision = tau * b * b * s.xi_sum + kappa;
        ((tau * b * s.xi_raw_sum + kappa * zeta) / precision, 1.0 / precision)
    }

    pub fn update_means<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        if self.priors.fix_means_to_zero {
            state.params.means.iter_mut().for_each(|m| *m = 0.0);
            return;
        }
        // μ_k's conditional depends only on component k's statistics, and
        // the raw residual sums do not involve μ.
        let stats = self.component_stats(state);
        for k in 0..state.params.g() {
            let (mean, var) = self.mean_conditional(state, &stats, k);
            let z: f64 = StandardNormal.sample(rng);
            state.params.means[k] = mean + var.sqrt() * z;
        }
    }

    /// Gamma (shape, rate) conditional of `τ_k`.
    pub fn precision_conditional(&self, state: &ChainState, stats: &[ComponentStats], k: usize) -> (f64, f64) {
        let s = &stats[k];
        (
            0.5 * s.count as f64 + self.priors.c,
            0.5 * s.xi_sq_sum + state.params.lambda,
        )
    }

    pub fn update_precisions<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let stats = self.component_stats(state);
        for k in 0..state.params.g() {
            let (shape, rate) = self.precision_conditional(state, &stats, k);
            state.params.precisions[k] = sample_gamma(shape, rate, rng);
        }
    }

    /// Gamma (shape, rate) conditional of λ.
    pub fn lambda_conditional(&self, params: &Params) -> (f64, f64) {
        (
            self.priors.a + self.priors.c * params.g() as f64,
            self.priors.b + params.precisions.iter().sum::<f64>(),
        )
    }

    pub fn update_lambda<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        let (shape, rate) = self.lambda_conditional(&state.params);
        state.params.lambda = sample_gamma(shape, rate, rng);
    }

    /// `ln` of the augmented-likelihood ratio for replacing `φ_k` by
    /// `candidate`, holding `μ_k` fixed.
    pub fn ar_log_ratio(&self, state: &ChainState, k: usize, candidate: &[f64]) -> f64 {
        let p = &state.params;
        let mu = p.means[k];
        let b_new = 1.0 - candidate.iter().sum::<f64>();
        let mut delta = 0.0;
        for (i, &z) in state.latent.allocations.iter().enumerate() {
            if z != k {
                continue;
            }
            let t = self.start + i;
            let e_old = p.residual(self.y, k, t);
            let mut e_new = self.y[t] - mu * b_new;
            for (j, phi) in candidate.iter().enumerate() {
                e_new -= phi * self.y[t - 1 - j];
            }
            delta += state.latent.xis[i] * (e_new * e_new - e_old * e_old);
        }
        -0.5 * p.precisions[k] * delta
    }

    /// Whether `candidate` for component `k` lies in the prior support.
    pub fn ar_admissible(&self, params: &Params, k: usize, candidate: &[f64]) -> Result<bool> {
        if !self.priors.ar_within_bound(candidate) {
            return Ok(false);
        }
        let mut ar = params.ar.clone();
        ar[k] = candidate.to_vec();
        model::is_stable(&params.weights, &ar)
    }

    /// Random-walk acceptance probability of `candidate` from the state's
    /// current `φ_k`.
    pub fn ar_acceptance(&self, state: &ChainState, k: usize, candidate: &[f64]) -> Result<f64> {
        if !self.ar_admissible(&state.params, k, candidate)? {
            return Ok(0.0);
        }
        Ok(self.ar_log_ratio(state, k, candidate).min(0.0).exp())
    }

    /// One random-walk step for `φ_k`; returns the acceptance probability
    /// and whether the move was taken.
    pub fn update_ar<R: Rng + ?Sized>(&self, state: &mut ChainState, k: usize, rng: &mut R) -> Result<(f64, bool)> {
        let current = &state.params.ar[k];
        if current.is_empty() {
            return Ok((1.0, true));
        }
        let step = self.steps[k];
        let candidate: Vec<f64> = current
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(rng);
                c + step * z
            })
            .collect();
        let prob = self.ar_acceptance(state, k, &candidate)?;
        let accept = rng.random::<f64>() < prob;
        if accept {
            state.params.ar[k] = candidate;
        }
        Ok((prob, accept))
    }

    /// Log of the ν-dependent part of the augmented likelihood for
    /// component `k`.
    pub fn dof_ln_likelihood(&self, stats: &ComponentStats, nu: f64) -> f64 {
        let half = 0.5 * nu;
        let rate = 0.5 * (nu - 2.0);
        stats.count as f64 * (half * rate.ln() - ln_gamma(half)) + (half - 1.0) * stats.ln_xi_sum
            - rate * stats.xi_sum
    }

    /// Independence-sampler acceptance from `from` to `to`.
    pub fn dof_acceptance(&self, stats: &ComponentStats, from: f64, to: f64) -> f64 {
        (self.dof_ln_likelihood(stats, to) - self.dof_ln_likelihood(stats, from))
            .min(0.0)
            .exp()
    }

    pub fn update_dof<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        stats: &ComponentStats,
        k: usize,
        rng: &mut R,
    ) -> bool {
        let candidate = self.nu_priors[k].sample(rng);
        let prob = self.dof_acceptance(stats, state.params.dofs[k], candidate);
        let accept = rng.random::<f64>() < prob;
        if accept {
            state.params.dofs[k] = candidate;
        }
        accept
    }

    /// One full sweep in the fixed block order.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<SweepOutcome> {
        self.check_state(state)?;
        let g = state.params.g();
        let f = &self.frozen;
        if !f.latent {
            self.update_allocations(state, rng);
            self.update_xi(state, rng);
        }
        let mut outcome = SweepOutcome {
            weights: None,
            ar: vec![None; g],
            dofs: vec![None; g],
        };
        if !f.weights {
            outcome.weights = Some(self.update_weights(state, rng)?);
        }
        if !f.means {
            self.update_means(state, rng);
        }
        if !f.precisions {
            self.update_precisions(state, rng);
        }
        if !f.lambda {
            self.update_lambda(state, rng);
        }
        for k in 0..g {
            if !f.ar(k) && !state.params.ar[k].is_empty() {
                outcome.ar[k] = Some(self.update_ar(state, k, rng)?.1);
            }
        }
        if (0..g).any(|k| !f.dof(k)) {
            let stats = self.component_stats(state);
            for k in 0..g {
                if !f.dof(k) {
                    outcome.dofs[k] = Some(self.update_dof(state, &stats[k], k, rng));
                }
            }
        }
        Ok(outcome)
    }
}

fn allocation_constants(p: &Params) -> Vec<f64> {
    (0..p.g())
        .map(|k| {
            let nu = p.dofs[k];
            let half = 0.5 * nu;
            p.weights[k].ln() + 0.5 * p.precisions[k].ln() + half * (0.5 * (nu - 2.0)).ln()
                - ln_gamma(half)
        })
        .collect()
}

#[inline]
fn allocation_log_weight(
    p: &Params,
    consts: &[f64],
    y: &[f64],
    k: usize,
    t: usize,
    xi: f64,
    ln_xi: f64,
) -> f64 {
    let e = p.residual(y, k, t);
    let nu = p.dofs[k];
    consts[k] + (0.5 * nu - 1.0) * ln_xi - 0.5 * (nu - 2.0) * xi - 0.5 * p.precisions[k] * xi * e * e
}

/// Settings for a single fixed-order chain.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsSettings {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burnin: usize,
    /// Initial random-walk standard deviations; `None` uses the default.
    pub ar_steps: Option<Vec<f64>>,
    /// Adapt the random-walk steps during burn-in.
    pub adapt: bool,
    /// First modelled time index; defaults to the largest order.
    pub window_start: Option<usize>,
    /// Starting point for [`Sampler::initialize_near`]; `None` starts
    /// dispersed.
    pub start: Option<Params>,
}

impl GibbsSettings {
    pub fn new(iterations: usize, burnin: usize) -> Self {
        Self {
            iterations,
            burnin,
            ar_steps: None,
            adapt: true,
            window_start: None,
            start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burnin {
            return Err(Error::Usage(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burnin
            )));
        }
        Ok(())
    }
}

/// Retained draws and bookkeeping of one chain.
#[derive(Clone, Debug)]
pub struct ChainTrace {
    pub orders: Vec<usize>,
    pub window_start: usize,
    pub draws: Vec<Params>,
    pub weight_acceptance: AcceptanceCounter,
    pub ar_acceptance: Vec<AcceptanceCounter>,
    pub dof_acceptance: Vec<AcceptanceCounter>,
    /// Random-walk steps used after burn-in.
    pub ar_steps: Vec<f64>,
    pub final_state: ChainState,
}

impl ChainTrace {
    pub fn g(&self) -> usize {
        self.orders.len()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Column names in trace order.
    pub fn parameter_names(&self) -> Vec<String> {
        parameter_names(&self.orders)
    }

    /// One row per draw, matching [`ChainTrace::parameter_names`].
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(flatten_params).collect()
    }

    /// Values of one named parameter across the trace.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.parameter_names().iter().position(|n| n == name)?;
        Some(self.draws.iter().map(|d| flatten_params(d)[idx]).collect())
    }
}

/// Column names: weights, means, precisions, AR coefficients, dofs, λ.
/// Components are numbered from 1.
pub fn parameter_names(orders: &[usize]) -> Vec<String> {
    let g = orders.len();
    let mut names = Vec::new();
    names.extend((1..=g).map(|k| format!("pi_{k}")));
    names.extend((1..=g).map(|k| format!("mu_{k}")));
    names.extend((1..=g).map(|k| format!("tau_{k}")));
    for (k, &p) in orders.iter().enumerate() {
        names.extend((1..=p).map(|i| format!("phi_{}_{i}", k + 1)));
    }
    names.extend((1..=g).map(|k| format!("nu_{k}")));
    names.push("lambda".into());
    names
}

pub fn flatten_params(p: &Params) -> Vec<f64> {
    let mut row = Vec::with_capacity(4 * p.g() + 1 + p.ar.iter().map(Vec::len).sum::<usize>());
    row.extend(&p.weights);
    row.extend(&p.means);
    row.extend(&p.precisions);
    for c in &p.ar {
        row.extend(c);
    }
    row.extend(&p.dofs);
    row.push(p.lambda);
    row
}

/// Inverse of [`flatten_params`].
pub fn unflatten_params(orders: &[usize], row: &[f64]) -> Result<Params> {
    let g = orders.len();
    let expected = 4 * g + 1 + orders.iter().sum::<usize>();
    if row.len() != expected {
        return Err(Error::Data(format!(
            "row has {} values, orders {orders:?} need {expected}",
            row.len()
        )));
    }
    let mut it = row.iter().copied();
    let mut take = |n: usize| -> Vec<f64> { (&mut it).take(n).collect() };
    let weights = take(g);
    let means = take(g);
    let precisions = take(g);
    let ar = orders.iter().map(|&p| take(p)).collect();
    let dofs = take(g);
    let lambda = take(1)[0];
    Ok(Params {
        weights,
        means,
        precisions,
        ar,
        dofs,
        lambda,
    })
}

/// Robbins–Monro update of log step sizes toward the target acceptance.
#[derive(Clone, Debug)]
pub(crate) struct StepAdapter {
    iteration: usize,
}

impl StepAdapter {
    pub(crate) fn new() -> Self {
        Self { iteration: 0 }
    }

    pub(crate) fn update(&mut self, steps: &mut [f64], outcome: &SweepOutcome) {
        self.iteration += 1;
        let gain = (self.iteration as f64).powf(-0.6);
        for (step, acc) in steps.iter_mut().zip(&outcome.ar) {
            if let Some(accepted) = acc {
                let a = if *accepted { 1.0 } else { 0.0 };
                *step = (step.ln() + gain * (a - TARGET_ACCEPTANCE))
                    .exp()
                    .clamp(MIN_AR_STEP, MAX_AR_STEP);
            }
        }
    }
}

/// Run `settings.iterations` sweeps from `state`, retaining the draws after
/// burn-in. Step sizes adapt during burn-in only.
pub fn run_chain<R: Rng + ?Sized>(
    sampler: &mut Sampler<'_>,
    mut state: ChainState,
    settings: &GibbsSettings,
    rng: &mut R,
) -> Result<ChainTrace> {
    settings.validate()?;
    let g = state.params.g();
    let mut adapter = StepAdapter::new();
    let mut trace = ChainTrace {
        orders: state.params.orders(),
        window_start: sampler.start(),
        draws: Vec::with_capacity(settings.iterations - settings.burnin),
        weight_acceptance: AcceptanceCounter::default(),
        ar_acceptance: vec![AcceptanceCounter::default(); g],
        dof_acceptance: vec![AcceptanceCounter::default(); g],
        ar_steps: sampler.steps.clone(),
        final_state: state.clone(),
    };
    for iteration in 0..settings.iterations {
        let outcome = sampler.sweep(&mut state, rng)?;
        if let Err(message) = state.params.check_invariants() {
            return Err(Error::ChainFault { iteration, message });
        }
        if iteration < settings.burnin {
            if settings.adapt {
                adapter.update(&mut sampler.steps, &outcome);
            }
            continue;
        }
        if let Some(a) = outcome.weights {
            trace.weight_acceptance.record(a);
        }
        for k in 0..g {
            if let Some(a) = outcome.ar[k] {
                trace.ar_acceptance[k].record(a);
            }
            if let Some(a) = outcome.dofs[k] {
                trace.dof_acceptance[k].record(a);
            }
        }
        trace.draws.push(state.params.clone());
    }
    trace.ar_steps = sampler.steps.clone();
    trace.final_state = state;
    Ok(trace)
}

/// Fit fixed orders to `y`, from `settings.start` when given.
pub fn run_gibbs<R: Rng + ?Sized>(
    y: &[f64],
    orders: &[usize],
    priors: &PriorConfig,
    settings: &GibbsSettings,
    rng: &mut R,
) -> Result<ChainTrace> {
    settings.validate()?;
    let start = settings
        .window_start
        .unwrap_or_else(|| orders.iter().copied().max().unwrap_or(0));
    let mut sampler = Sampler::new(y, start, priors)?;
    if let Some(steps) = &settings.ar_steps {
        if steps.len() != orders.len() || steps.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Usage(format!(
                "need {} positive random-walk steps, got {steps:?}",
                orders.len()
            )));
        }
        sampler.steps = steps.clone();
    }
    let state = match &settings.start {
        Some(hint) => sampler.initialize_near(hint, orders, rng)?,
        None => sampler.initialize(orders, rng)?,
    };
    run_chain(&mut sampler, state, settings, rng)
}

/// Shape and rate of the nearly flat dof prior used by the pilot run.
pub const PILOT_NU_PRIOR: (f64, f64) = (1.0, 1e-3);

/// Independent pilot chains; the best draw over all of them is kept, so
/// one chain stuck in a poor mode does not set the starting point.
const PILOT_CHAINS: usize = 3;

/// Grid spacing of the dof profile search.
const NU_PROFILE_STEP: f64 = 0.05;

/// Maximum-likelihood-style dof estimates used to centre the dof priors of
/// the main run.
///
/// Pilot chains run from dispersed starts under a nearly flat dof prior on
/// `(2, 30]`. Starting from the highest-likelihood draw over all of them,
/// each `ν_k` is set to the maximiser of the exact (latent-free) likelihood
/// with everything else held fixed, cycling over components a few times.
/// Returns that draw, with the profiled dofs, and the trace it came from.
/// Its labels are the ones the centres refer to, so main runs should start
/// from it.
pub fn pilot_nu_centres<R: Rng + ?Sized>(
    y: &[f64],
    orders: &[usize],
    priors: &PriorConfig,
    settings: &GibbsSettings,
    rng: &mut R,
) -> Result<(Params, ChainTrace)> {
    let mut diffuse = priors.clone();
    diffuse.nu_shape = vec![PILOT_NU_PRIOR.0; priors.g()];
    diffuse.nu_rate = vec![PILOT_NU_PRIOR.1; priors.g()];
    let mut pilot: Option<(f64, Params, ChainTrace)> = None;
    for _ in 0..PILOT_CHAINS {
        let trace = run_gibbs(y, orders, &diffuse, settings, rng)?;
        let start = trace.window_start;
        let top = trace
            .draws
            .iter()
            .map(|d| (d.ln_likelihood(y, start), d))
            .filter(|(l, _)| l.is_finite())
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(l, d)| (l, d.clone()));
        if let Some((l, d)) = top {
            if pilot.as_ref().is_none_or(|(best, _, _)| l > *best) {
                pilot = Some((l, d, trace));
            }
        }
    }
    let (_, mut best, trace) =
        pilot.ok_or_else(|| Error::numerical("pilot run produced no finite likelihood"))?;
    let start = trace.window_start;
    let steps = ((MAX_DOF - MIN_DOF) / NU_PROFILE_STEP).round() as usize;
    for _ in 0..3 {
        for k in 0..best.g() {
            let mut top = (f64::NEG_INFINITY, best.dofs[k]);
            for i in 1..=steps {
                let mut candidate = best.clone();
                candidate.dofs[k] = MIN_DOF + i as f64 * NU_PROFILE_STEP;
                let l = candidate.ln_likelihood(y, start);
                if l > top.0 {
                    top = (l, candidate.dofs[k]);
                }
            }
            best.dofs[k] = top.1;
        }
    }
    Ok((best, trace))
}
