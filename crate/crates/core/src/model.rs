//! Mixture autoregressive model with standardized Student-t components.
//!
//! Conditionally on the past, `y_t` is drawn from component `k` with
//! probability `π_k`, where component `k` is
//!
//! ```text
//! y_t = φ_k0 + φ_k1 y_{t-1} + ... + φ_kp_k y_{t-p_k} + ε_tk,   ε_tk ~ S(0, σ_k², ν_k)
//! ```
//!
//! and `φ_k0 = μ_k (1 - Σ_i φ_ki)`. Histories passed to the functions in this
//! module are chronological: the last element is `y_{t-1}`.

use nalgebra::{DMatrix, DVector, Schur};
use rand::Rng;

use crate::distributions::{ln_standardized_t_pdf, StandardizedT};
use crate::error::{Error, Result};

/// Spectral radius must stay below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-10;

/// Degrees of freedom live in `(MIN_DOF, MAX_DOF]`.
pub const MIN_DOF: f64 = 2.0;
pub const MAX_DOF: f64 = 30.0;

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;
const GELFAND_SQUARINGS: usize = 60;

/// Minimum number of warm-up draws discarded by [`simulate_series`].
pub const MIN_SIMULATION_BURNIN: usize = 200;

/// How the intercept of a component is pinned down.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Location {
    /// Component mean `μ_k`; the shift is `μ_k (1 - Σ φ_ki)`.
    Mean(f64),
    /// Shift `φ_k0` stored directly (unit-root components have no mean).
    Shift(f64),
}

/// Full parameterisation of a tMAR model.
#[derive(Clone, Debug, PartialEq)]
pub struct TMarSpec {
    weights: Vec<f64>,
    locations: Vec<Location>,
    scales: Vec<f64>,
    ar: Vec<Vec<f64>>,
    dofs: Vec<f64>,
}

impl TMarSpec {
    pub fn new(
        weights: Vec<f64>,
        locations: Vec<Location>,
        scales: Vec<f64>,
        ar: Vec<Vec<f64>>,
        dofs: Vec<f64>,
    ) -> Result<Self> {
        let g = weights.len();
        if g == 0 {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        if locations.len() != g || scales.len() != g || ar.len() != g || dofs.len() != g {
            return Err(Error::invalid(format!(
                "component count mismatch: {} weights, {} locations, {} scales, {} AR blocks, {} dofs",
                g,
                locations.len(),
                scales.len(),
                ar.len(),
                dofs.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("mixing weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixing weights sum to {total}, not 1")));
        }
        if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("scales must be positive"));
        }
        if let Some(nu) = dofs.iter().find(|nu| !(**nu > MIN_DOF && **nu <= MAX_DOF)) {
            return Err(Error::invalid(format!(
                "degrees of freedom must lie in ({MIN_DOF}, {MAX_DOF}], got {nu}"
            )));
        }
        let finite_loc = locations.iter().all(|l| match l {
            Location::Mean(m) | Location::Shift(m) => m.is_finite(),
        });
        if !finite_loc || ar.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("locations and AR coefficients must be finite"));
        }
        Ok(Self {
            weights,
            locations,
            scales,
            ar,
            dofs,
        })
    }

    /// Convenience constructor from component means.
    pub fn with_means(
        weights: Vec<f64>,
        means: Vec<f64>,
        scales: Vec<f64>,
        ar: Vec<Vec<f64>>,
        dofs: Vec<f64>,
    ) -> Result<Self> {
        let locations = means.into_iter().map(Location::Mean).collect();
        Self::new(weights, locations, scales, ar, dofs)
    }

    /// Three components with orders (2, 1, 1): weights (0.4, 0.4, 0.2),
    /// scales (5, 3, 1), dofs (4, 14, 10), zero means. The first component
    /// has a unit root and the second is explosive on its own, yet the
    /// mixture is stable.
    pub fn three_component_benchmark() -> Self {
        Self::with_means(
            vec![0.4, 0.4, 0.2],
            vec![0.0; 3],
            vec![5.0, 3.0, 1.0],
            vec![vec![-0.5, 0.5], vec![1.1], vec![-0.4]],
            vec![4.0, 14.0, 10.0],
        )
        .expect("benchmark parameters are valid")
    }

    pub fn g(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }

    pub fn ar(&self) -> &[Vec<f64>] {
        &self.ar
    }

    pub fn orders(&self) -> Vec<usize> {
        self.ar.iter().map(Vec::len).collect()
    }

    /// Largest autoregressive order `p`.
    pub fn max_order(&self) -> usize {
        self.ar.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn precision(&self, k: usize) -> f64 {
        1.0 / (self.scales[k] * self.scales[k])
    }

    /// `1 - Σ_i φ_ki`.
    pub fn ar_complement(&self, k: usize) -> f64 {
        1.0 - self.ar[k].iter().sum::<f64>()
    }

    /// Shift parameter `φ_k0`.
    pub fn shift(&self, k: usize) -> f64 {
        match self.locations[k] {
            Location::Mean(m) => m * self.ar_complement(k),
            Location::Shift(s) => s,
        }
    }

    /// Component mean, undefined for a stored shift on a unit-root component.
    pub fn mean(&self, k: usize) -> Option<f64> {
        match self.locations[k] {
            Location::Mean(m) => Some(m),
            Location::Shift(s) => {
                let b = self.ar_complement(k);
                (b != 0.0).then(|| s / b)
            }
        }
    }

    /// Conditional mean `μ_tk` of component `k` given a chronological history.
    pub fn component_mean(&self, k: usize, history: &[f64]) -> f64 {
        let n = history.len();
        self.shift(k)
            + self.ar[k]
                .iter()
                .enumerate()
                .map(|(i, phi)| phi * history[n - 1 - i])
                .sum::<f64>()
    }

    fn check_history(&self, history: &[f64]) -> Result<()> {
        let p = self.max_order();
        if history.len() < p {
            return Err(Error::InsufficientHistory {
                needed: p,
                got: history.len(),
            });
        }
        Ok(())
    }
}

/// Outcome of the second-order stationarity check.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    pub spectral_radius: f64,
    pub per_component_stable: Vec<bool>,
}

/// Companion matrix of one component, zero-padded to the model order.
pub fn companion_matrix(spec: &TMarSpec, k: usize) -> Result<DMatrix<f64>> {
    if k >= spec.g() {
        return Err(Error::invalid(format!(
            "component {k} out of range for g = {}",
            spec.g()
        )));
    }
    let p = spec.max_order();
    if p == 0 {
        return Err(Error::invalid("companion matrix undefined for a model of order 0"));
    }
    Ok(companion(&spec.ar[k], p))
}

fn companion(coeffs: &[f64], p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for (j, c) in coeffs.iter().enumerate() {
        m[(0, j)] = *c;
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m
}

/// `Σ_k π_k A_k ⊗ A_k`, of size `p² × p²`.
pub fn mixture_stability_matrix(weights: &[f64], ar: &[Vec<f64>]) -> DMatrix<f64> {
    let p = ar.iter().map(Vec::len).max().unwrap_or(0);
    let dim = p * p;
    let mut a = DMatrix::zeros(dim, dim);
    for (w, coeffs) in weights.iter().zip(ar) {
        let c = companion(coeffs, p);
        for i in 0..p {
            for j in 0..p {
                let cij = c[(i, j)];
                if cij == 0.0 {
                    continue;
                }
                for r in 0..p {
                    for s in 0..p {
                        a[(i * p + r, j * p + s)] += w * cij * c[(r, s)];
                    }
                }
            }
        }
    }
    a
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("eigenvalue input contains non-finite entries"));
    }
    match Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER) {
        Some(schur) => Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)),
        // QR iterations can stall on defective matrices (e.g. nilpotent
        // blocks); Gelfand's formula converges regardless
        None => gelfand_radius(m),
    }
}

/// `lim ‖M^k‖^{1/k}` evaluated at `k = 2^GELFAND_SQUARINGS`, rescaling
/// after every squaring.
fn gelfand_radius(m: &DMatrix<f64>) -> Result<f64> {
    let mut x = m.clone();
    let mut ln_radius = 0.0;
    let mut power = 1.0f64;
    for _ in 0..GELFAND_SQUARINGS {
        let norm = x.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        x /= norm;
        ln_radius += norm.ln() / power;
        x = &x * &x;
        power *= 2.0;
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let radius = (ln_radius + norm.ln() / power).exp();
    if radius.is_finite() {
        Ok(radius)
    } else {
        Err(Error::numerical(format!(
            "spectral radius of a {0}x{0} matrix could not be computed",
            m.nrows()
        )))
    }
}

fn below_margin(radius: f64) -> bool {
    radius < 1.0 - STABILITY_MARGIN
}

/// Stability decision from raw weights and AR blocks.
///
/// This is the check the samplers run on every candidate.
pub fn is_stable(weights: &[f64], ar: &[Vec<f64>]) -> Result<bool> {
    let p = ar.iter().map(Vec::len).max().unwrap_or(0);
    match p {
        0 => Ok(true),
        1 => {
            let r: f64 = weights
                .iter()
                .zip(ar)
                .map(|(w, c)| w * c.first().map_or(0.0, |x| x * x))
                .sum();
            Ok(below_margin(r))
        }
        _ => Ok(below_margin(spectral_radius(&mixture_stability_matrix(
            weights, ar,
        ))?)),
    }
}

pub fn stability_check(spec: &TMarSpec) -> Result<StabilityReport> {
    let p = spec.max_order();
    if p == 0 {
        return Ok(StabilityReport {
            stable: true,
            spectral_radius: 0.0,
            per_component_stable: vec![true; spec.g()],
        });
    }
    // padding a companion with zero lags only adds zero eigenvalues
    let per_component_stable = spec
        .ar
        .iter()
        .map(|c| spectral_radius(&companion(c, c.len())).map(below_margin))
        .collect::<Result<Vec<_>>>()?;
    let spectral_radius = spectral_radius(&mixture_stability_matrix(&spec.weights, &spec.ar))?;
    Ok(StabilityReport {
        stable: below_margin(spectral_radius),
        spectral_radius,
        per_component_stable,
    })
}

/// Log of the one-step conditional density with the latent variables
/// integrated out.
pub fn ln_conditional_density(spec: &TMarSpec, y: f64, history: &[f64]) -> Result<f64> {
    spec.check_history(history)?;
    let terms: Vec<f64> = (0..spec.g())
        .map(|k| {
            let resid = y - spec.component_mean(k, history);
            spec.weights[k].ln()
                + ln_standardized_t_pdf(resid, spec.scales[k] * spec.scales[k], spec.dofs[k])
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

pub fn conditional_density(spec: &TMarSpec, y: f64, history: &[f64]) -> Result<f64> {
    ln_conditional_density(spec, y, history).map(f64::exp)
}

/// Log-likelihood of `y[start..]` conditional on the first `start` values.
pub fn ln_likelihood(spec: &TMarSpec, y: &[f64], start: usize) -> Result<f64> {
    let start = start.max(spec.max_order());
    (start..y.len())
        .map(|t| ln_conditional_density(spec, y[t], &y[..t]))
        .sum()
}

/// Conditional mean and variance of `y_t` given the past.
pub fn conditional_moments(spec: &TMarSpec, history: &[f64]) -> Result<(f64, f64)> {
    spec.check_history(history)?;
    let (mut mean, mut second, mut within) = (0.0, 0.0, 0.0);
    for k in 0..spec.g() {
        let w = spec.weights[k];
        let m = spec.component_mean(k, history);
        mean += w * m;
        second += w * m * m;
        within += w * spec.scales[k] * spec.scales[k];
    }
    // between-component spread is a variance, so never negative
    let between = (second - mean * mean).max(0.0);
    Ok((mean, within + between))
}

/// Autocorrelations `ρ_0..=ρ_max_lag` of a stable model.
pub fn theoretical_acf(spec: &TMarSpec, max_lag: usize) -> Result<Vec<f64>> {
    let report = stability_check(spec)?;
    if !report.stable {
        return Err(Error::invalid(format!(
            "autocorrelations need a stable model (spectral radius {})",
            report.spectral_radius
        )));
    }
    let p = spec.max_order();
    // mixture-averaged coefficients a_i = Σ_k π_k φ_ki
    let a: Vec<f64> = (0..p)
        .map(|i| {
            spec.weights
                .iter()
                .zip(&spec.ar)
                .map(|(w, c)| w * c.get(i).copied().unwrap_or(0.0))
                .sum()
        })
        .collect();
    let mut rho = vec![0.0; max_lag.max(p) + 1];
    rho[0] = 1.0;
    if p > 0 {
        // ρ_h - Σ_i a_i ρ_{|h-i|} = 0 for h = 1..p, with ρ_0 = 1 moved to the rhs.
        let mut m = DMatrix::<f64>::identity(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        for h in 1..=p {
            for i in 1..=p {
                let lag = h.abs_diff(i);
                if lag == 0 {
                    rhs[h - 1] += a[i - 1];
                } else {
                    m[(h - 1, lag - 1)] -= a[i - 1];
                }
            }
        }
        let solved = m
            .lu()
            .solve(&rhs)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::numerical("autocorrelation system is singular"))?;
        for h in 1..=p {
            rho[h] = solved[h - 1];
        }
        for h in p + 1..rho.len() {
            rho[h] = (1..=p).map(|i| a[i - 1] * rho[h - i]).sum();
        }
    }
    rho.truncate(max_lag + 1);
    Ok(rho)
}

/// A simulated path together with the latent draws that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub values: Vec<f64>,
    /// Zero-based component index per retained time point.
    pub allocations: Vec<usize>,
    pub xis: Vec<f64>,
    /// Whether the generating model passed the stability check.
    pub stable: bool,
}

/// Continue a path from `initial` for `n` further steps, without warm-up.
///
/// The returned values exclude `initial`.
pub fn simulate_from<R: Rng + ?Sized>(
    spec: &TMarSpec,
    initial: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Simulation> {
    spec.check_history(initial)?;
    let components = (0..spec.g())
        .map(|k| StandardizedT::new(0.0, spec.scales[k] * spec.scales[k], spec.dofs[k]))
        .collect::<Result<Vec<_>>>()?;
    let cumulative: Vec<f64> = spec
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut path = initial.to_vec();
    path.reserve(n);
    let mut allocations = Vec::with_capacity(n);
    let mut xis = Vec::with_capacity(n);
    for step in 0..n {
        let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
        let k = cumulative.iter().position(|&c| u < c).unwrap_or(spec.g() - 1);
        let (eps, xi) = components[k].sample_with_mixing(rng);
        let y = spec.component_mean(k, &path) + eps;
        if !y.is_finite() {
            return Err(Error::numerical(format!(
                "simulated value at step {} is not finite",
                initial.len() + step
            )));
        }
        path.push(y);
        allocations.push(k);
        xis.push(xi);
    }
    let stable = is_stable(&spec.weights, &spec.ar)?;
    Ok(Simulation {
        values: path.split_off(initial.len()),
        allocations,
        xis,
        stable,
    })
}

/// Simulate `n` values after discarding `max(burnin, 200)` warm-up draws.
///
/// Unstable models are simulated anyway; `Simulation::stable` records it.
pub fn simulate_series<R: Rng + ?Sized>(
    spec: &TMarSpec,
    n: usize,
    burnin: usize,
    rng: &mut R,
) -> Result<Simulation> {
    let p = spec.max_order();
    if n < p + 1 {
        return Err(Error::invalid(format!(
            "series length {n} is shorter than order + 1 = {}",
            p + 1
        )));
    }
    let burnin = burnin.max(MIN_SIMULATION_BURNIN);
    let spread = spec
        .weights
        .iter()
        .zip(&spec.scales)
        .map(|(w, s)| w * s * s)
        .sum::<f64>()
        .sqrt();
    let initial: Vec<f64> = (0..p)
        .map(|_| spread * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng))
        .collect();
    let mut sim = simulate_from(spec, &initial, burnin + n, rng)?;
    sim.values.drain(..burnin);
    sim.allocations.drain(..burnin);
    sim.xis.drain(..burnin);
    Ok(sim)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
