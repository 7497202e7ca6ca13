//! Small configurations with independently computable answers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;

use tmar::distributions::{sample_dirichlet, sample_gamma, StandardizedT};
use tmar::model::{self, simulate_from, Location, TMarSpec};
use tmar::order::{run_order_chain, RjSettings};
use tmar::prior::{gamma_from_mode_and_variance, PriorConfig};
use tmar::sampler::{ChainState, Frozen, LatentState, Params, Sampler};

use super::{ks_test, thin, z_score, GridCdf};

/// Standardized-t log density written out from scratch (oracle side).
pub fn ln_t(resid: f64, precision: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln()
        + 0.5 * precision.ln()
        - 0.5 * (nu + 1.0) * (1.0 + precision * resid * resid / (nu - 2.0)).ln()
}

pub fn ln_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn spec_of(p: &Params) -> TMarSpec {
    TMarSpec::new(
        p.weights.clone(),
        p.means.iter().map(|m| Location::Mean(*m)).collect(),
        p.precisions.iter().map(|t| 1.0 / t.sqrt()).collect(),
        p.ar.clone(),
        p.dofs.clone(),
    )
    .unwrap()
}

// ---------------------------------------------------------------- Geweke

pub fn geweke_priors() -> PriorConfig {
    let (shape, rate) = gamma_from_mode_and_variance(10.0, 25.0).unwrap();
    PriorConfig {
        zeta: 0.0,
        kappa: 1.0,
        c: 2.0,
        a: 5.0,
        b: 5.0,
        dirichlet: vec![1.0, 1.0],
        nu_shape: vec![shape; 2],
        nu_rate: vec![rate; 2],
        fix_means_to_zero: false,
        ar_bound: Some(1.5),
    }
}

/// Exact draw from the joint prior of the Geweke configuration
/// (g = 2, p = 1). Weights and AR coefficients are drawn jointly by
/// rejection because the stability indicator couples them.
pub fn geweke_prior_draw<R: Rng>(priors: &PriorConfig, rng: &mut R) -> Params {
    let g = priors.g();
    let bound = priors.ar_bound.unwrap();
    let (weights, ar) = loop {
        let w = sample_dirichlet(&priors.dirichlet, rng).unwrap();
        let ar: Vec<Vec<f64>> = (0..g).map(|_| vec![rng.random_range(-bound..bound)]).collect();
        if model::is_stable(&w, &ar).unwrap() {
            break (w, ar);
        }
    };
    let normal = Normal::new(priors.zeta, 1.0 / priors.kappa.sqrt()).unwrap();
    let means = (0..g).map(|_| normal.sample(rng)).collect();
    let lambda = sample_gamma(priors.a, priors.b, rng);
    let precisions = (0..g).map(|_| sample_gamma(priors.c, lambda, rng)).collect();
    let dofs = (0..g).map(|k| priors.nu_prior(k).unwrap().sample(rng)).collect();
    Params {
        weights,
        means,
        precisions,
        ar,
        dofs,
        lambda,
    }
}

/// `(y, z, ξ)` given parameters, with `y_1 = 0`.
pub fn geweke_simulate<R: Rng>(p: &Params, n: usize, rng: &mut R) -> (Vec<f64>, LatentState) {
    let sim = simulate_from(&spec_of(p), &[0.0], n - 1, rng).unwrap();
    let mut y = vec![0.0];
    y.extend(sim.values);
    (
        y,
        LatentState {
            allocations: sim.allocations,
            xis: sim.xis,
        },
    )
}

pub const GEWEKE_NAMES: [&str; 10] = [
    "pi_1", "mu_1", "mu_2", "tau_1", "tau_2", "phi_1", "phi_2", "nu_1", "nu_2", "lambda",
];

fn geweke_vector(p: &Params) -> [f64; 10] {
    [
        p.weights[0],
        p.means[0],
        p.means[1],
        p.precisions[0],
        p.precisions[1],
        p.ar[0][0],
        p.ar[1][0],
        p.dofs[0],
        p.dofs[1],
        p.lambda,
    ]
}

/// z-scores of first and second moments: marginal-conditional draws versus
/// the successive-conditional chain, `draws` of each.
pub fn geweke_z_scores(draws: usize, seed: u64) -> Vec<(String, f64)> {
    let n = 30;
    let priors = geweke_priors();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut marginal: Vec<[f64; 10]> = Vec::with_capacity(draws);
    for _ in 0..draws {
        marginal.push(geweke_vector(&geweke_prior_draw(&priors, &mut rng)));
    }

    let mut p = geweke_prior_draw(&priors, &mut rng);
    let (mut y, mut latent) = geweke_simulate(&p, n, &mut rng);
    let mut successive: Vec<[f64; 10]> = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut state = ChainState {
            params: p.clone(),
            latent: latent.clone(),
        };
        {
            let mut sampler = Sampler::new(&y, 1, &priors).unwrap();
            sampler.steps = vec![0.3, 0.3];
            sampler.sweep(&mut state, &mut rng).unwrap();
        }
        p = state.params;
        successive.push(geweke_vector(&p));
        let (ny, nl) = geweke_simulate(&p, n, &mut rng);
        y = ny;
        latent = nl;
    }

    let mut out = Vec::new();
    for (i, name) in GEWEKE_NAMES.iter().enumerate() {
        let a: Vec<f64> = successive.iter().map(|v| v[i]).collect();
        let b: Vec<f64> = marginal.iter().map(|v| v[i]).collect();
        out.push((format!("E[{name}]"), z_score(&a, &b)));
        let a2: Vec<f64> = a.iter().map(|x| x * x).collect();
        let b2: Vec<f64> = b.iter().map(|x| x * x).collect();
        out.push((format!("E[{name}^2]"), z_score(&a2, &b2)));
    }
    out
}

// ------------------------------------------- single-block conditional checks

/// Fixed tiny dataset: `n` points of a t AR(1) with coefficient 0.5.
pub fn toy_series(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = StandardizedT::new(0.0, 1.0, 6.0).unwrap();
    let mut y = vec![0.3];
    for _ in 1..n {
        let prev = *y.last().unwrap();
        y.push(0.8 + 0.5 * (prev - 0.8) + t.sample(&mut rng));
    }
    y
}

pub fn toy_priors(g: usize) -> PriorConfig {
    PriorConfig {
        zeta: 0.5,
        kappa: 0.5,
        c: 2.0,
        a: 0.2,
        b: 0.3,
        dirichlet: vec![1.0; g],
        nu_shape: vec![3.0; g],
        nu_rate: vec![0.25; g],
        fix_means_to_zero: false,
        ar_bound: None,
    }
}

/// Single-component state with fixed latent ξ drawn once.
pub fn toy_state(y: &[f64], seed: u64) -> ChainState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = y.len() - 1;
    ChainState {
        params: Params {
            weights: vec![1.0],
            means: vec![0.6],
            precisions: vec![1.3],
            ar: vec![vec![0.4]],
            dofs: vec![6.0],
            lambda: 0.7,
        },
        latent: LatentState {
            allocations: vec![0; n],
            xis: (0..n).map(|_| sample_gamma(3.0, 3.0, &mut rng)).collect(),
        },
    }
}

/// Σ ξ_t (y_t − μ(1−φ) − φ y_{t−1})² recomputed directly.
fn weighted_sse(y: &[f64], xis: &[f64], mu: f64, phi: f64) -> f64 {
    (1..y.len())
        .map(|t| {
            let e = y[t] - mu * (1.0 - phi) - phi * y[t - 1];
            xis[t - 1] * e * e
        })
        .sum()
}

pub struct ConditionalCheck {
    pub block: &'static str,
    pub statistic: f64,
    pub p_value: f64,
}

/// KS checks of the φ, ν, μ and τ updates against quadrature of their
/// exact conditionals on an n = 15 toy, every other block held fixed.
pub fn conditional_checks(draws: usize, seed: u64) -> Vec<ConditionalCheck> {
    let y = toy_series(15, seed);
    let priors = toy_priors(1);
    let base = toy_state(&y, seed + 1);
    let xis = base.latent.xis.clone();
    let sampler = Sampler::new(&y, 1, &priors).unwrap().with_steps(vec![0.4]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let p0 = base.params.clone();
    let mut out = Vec::new();

    // φ: exp(−τ/2 Σ ξ e²) on the stable interval (−1, 1), random walk
    {
        let mut state = base.clone();
        let mut chain = Vec::with_capacity(draws);
        for i in 0..(draws * 5 + 5_000) {
            sampler.update_ar(&mut state, 0, &mut rng).unwrap();
            if i >= 5_000 {
                chain.push(state.params.ar[0][0]);
            }
        }
        let grid = GridCdf::new(
            |phi| -0.5 * p0.precisions[0] * weighted_sse(&y, &xis, p0.means[0], phi),
            -1.0 + 1e-10,
            1.0 - 1e-10,
            20_000,
        );
        let (d, pv) = ks_test(&thin(&chain, 5), |x| grid.cdf(x));
        out.push(ConditionalCheck {
            block: "phi",
            statistic: d,
            p_value: pv,
        });
    }

    // ν: independence sampler against likelihood × truncated-gamma prior
    {
        let mut state = base.clone();
        let stats = sampler.component_stats(&state);
        let n = xis.len() as f64;
        let sum_ln: f64 = xis.iter().map(|x| x.ln()).sum();
        let sum: f64 = xis.iter().sum();
        let mut chain = Vec::with_capacity(draws);
        for i in 0..(draws * 3 + 1_000) {
            sampler.update_dof(&mut state, &stats[0], 0, &mut rng);
            if i >= 1_000 {
                chain.push(state.params.dofs[0]);
            }
        }
        // ∏ Gamma(ξ_t; ν/2, (ν−2)/2) written out per observation
        let grid = GridCdf::new(
            |nu| {
                let h = 0.5 * nu;
                let r = 0.5 * (nu - 2.0);
                n * (h * r.ln() - ln_gamma(h)) + (h - 1.0) * sum_ln - r * sum
                    + ln_gamma_density(nu, 3.0, 0.25)
            },
            2.0 + 1e-9,
            30.0,
            40_000,
        );
        let (d, pv) = ks_test(&thin(&chain, 3), |x| grid.cdf(x));
        out.push(ConditionalCheck {
            block: "nu",
            statistic: d,
            p_value: pv,
        });
    }

    // μ: direct Gibbs draws against quadrature of likelihood × normal prior
    {
        let mut state = base.clone();
        let mut chain = Vec::with_capacity(draws);
        for _ in 0..draws {
            sampler.update_means(&mut state, &mut rng);
            chain.push(state.params.means[0]);
        }
        let phi = p0.ar[0][0];
        let grid = GridCdf::new(
            |mu| {
                -0.5 * p0.precisions[0] * weighted_sse(&y, &xis, mu, phi)
                    - 0.5 * priors.kappa * (mu - priors.zeta).powi(2)
            },
            -40.0,
            40.0,
            200_000,
        );
        let (d, pv) = ks_test(&chain, |x| grid.cdf(x));
        out.push(ConditionalCheck {
            block: "mu",
            statistic: d,
            p_value: pv,
        });
    }

    // τ: direct draws against τ^{n/2} exp(−τ S/2) Gamma(τ; c, λ)
    {
        let mut state = base.clone();
        let mut chain = Vec::with_capacity(draws);
        for _ in 0..draws {
            sampler.update_precisions(&mut state, &mut rng);
            chain.push(state.params.precisions[0]);
        }
        let s = weighted_sse(&y, &xis, p0.means[0], p0.ar[0][0]);
        let n = xis.len() as f64;
        let grid = GridCdf::new(
            |tau| 0.5 * n * tau.ln() - 0.5 * tau * s + ln_gamma_density(tau, priors.c, p0.lambda),
            1e-9,
            30.0,
            200_000,
        );
        let (d, pv) = ks_test(&chain, |x| grid.cdf(x));
        out.push(ConditionalCheck {
            block: "tau",
            statistic: d,
            p_value: pv,
        });
    }
    out
}

// ------------------------------------------------------ two-model RJ toy

/// AR(1) with t(10) noise, n = 20.
pub fn rj_toy_series(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = StandardizedT::new(0.0, 1.0, 10.0).unwrap();
    let mut y = vec![0.0];
    for _ in 1..20 {
        let prev = *y.last().unwrap();
        y.push(0.6 * prev + t.sample(&mut rng));
    }
    y
}

const RJ_TOY_NU: f64 = 10.0;

/// Log-likelihood of the toy for AR coefficients `phi`, from `t = 2`.
fn rj_toy_ln_likelihood(y: &[f64], phi: &[f64]) -> f64 {
    (2..y.len())
        .map(|t| {
            let pred: f64 = phi.iter().enumerate().map(|(i, c)| c * y[t - 1 - i]).sum();
            ln_t(y[t] - pred, 1.0, RJ_TOY_NU)
        })
        .sum()
}

/// `ln Z_1`, `ln Z_2`: integrals of the likelihood over the stable AR(1)
/// interval and the stable AR(2) triangle (unit prior density).
pub fn rj_toy_quadrature(y: &[f64]) -> (f64, f64) {
    let z1 = super::ln_integrate(|a| rj_toy_ln_likelihood(y, &[a]), -1.0, 1.0, 4_000);
    // triangle: −1 < φ2 < 1 − |φ1|, |φ1| < 2
    let inner = |a: f64| {
        let hi = 1.0 - a.abs();
        super::ln_integrate(|b| rj_toy_ln_likelihood(y, &[a, b]), -1.0, hi, 1_000)
    };
    let z2 = super::ln_integrate(inner, -2.0, 2.0, 2_000);
    (z1, z2)
}

/// Empirical `visits(2) / visits(1)` after `moves` reversible-jump moves
/// with only the AR block (and latents) free.
pub fn rj_toy_visit_ratio(y: &[f64], moves: usize, seed: u64) -> f64 {
    let priors = PriorConfig {
        zeta: 0.0,
        kappa: 1.0,
        c: 2.0,
        a: 1.0,
        b: 1.0,
        dirichlet: vec![1.0],
        nu_shape: vec![2.0],
        nu_rate: vec![0.1],
        fix_means_to_zero: true,
        ar_bound: None,
    };
    let mut sampler = Sampler::new(y, 2, &priors).unwrap().with_steps(vec![0.3]);
    sampler.frozen = Frozen {
        weights: true,
        means: true,
        precisions: true,
        lambda: true,
        ar: vec![false],
        dofs: vec![true],
        latent: false,
    };
    let n = y.len() - 2;
    let state = ChainState {
        params: Params {
            weights: vec![1.0],
            means: vec![0.0],
            precisions: vec![1.0],
            ar: vec![vec![0.0]],
            dofs: vec![RJ_TOY_NU],
            lambda: 1.0,
        },
        latent: LatentState {
            allocations: vec![0; n],
            xis: vec![1.0; n],
        },
    };
    let mut settings = RjSettings::new(moves, 1_000, 2);
    settings.sweeps_per_move = 1;
    settings.adapt = false;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sel = run_order_chain(&mut sampler, state, &settings, &mut rng).unwrap();
    let c1 = sel.visit_counts.get(&vec![1]).copied().unwrap_or(0) as f64;
    let c2 = sel.visit_counts.get(&vec![2]).copied().unwrap_or(0) as f64;
    c2 / c1
}
